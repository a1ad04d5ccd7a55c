//! Monte-Carlo driver.
//!
//! Realization `i` for user count `K` draws from `ChaCha8Rng` seeded with
//! `seed_from_u64(mix(rng_seed, K))` on stream `i`, so every realization is
//! an independent, addressable substream. All schemes and demand levels see
//! the same draws. Results are gathered per realization and then reduced
//! in index order, which makes the output independent of the thread count.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::{generate_realization, ChannelModel, Realization};
use super::clustering::cluster_users;
use crate::cluster::{feasibility_check, Feasibility};
use crate::energy::{dinkelbach_solve, InnerSolver};
use crate::error::{NomaError, Result};
use crate::model::{ClusterSpec, SystemParams};
use crate::sumrate::maximize_sum_rate;
use crate::units::dbm_to_w;

// ---------------------------------------------------------------------------
// Schemes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// All users on one channel spanning the whole band.
    ScNoma,
    /// At most `u` users per subchannel, `ceil(K/u)` subchannels.
    FdNoma(usize),
    /// One user per subchannel.
    Fdma,
}

impl Scheme {
    /// Users per cluster for `k` users.
    pub fn u_max(self, k: usize) -> usize {
        match self {
            Scheme::ScNoma => k.max(1),
            Scheme::FdNoma(u) => u,
            Scheme::Fdma => 1,
        }
    }

    pub fn n_subchannels(self, k: usize) -> usize {
        k.div_ceil(self.u_max(k)).max(1)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::ScNoma => write!(f, "SC-NOMA"),
            Scheme::FdNoma(u) => write!(f, "FD-NOMA-{u}"),
            Scheme::Fdma => write!(f, "FDMA"),
        }
    }
}

impl FromStr for Scheme {
    type Err = NomaError;

    /// Accepts `SC-NOMA`, `FDMA`, `FD-NOMA-<U>` and `<U>-NOMA`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let bad = || NomaError::InvalidParameter(format!("unknown scheme '{s}'"));
        match t.as_str() {
            "SC-NOMA" | "SCNOMA" | "SC" => Ok(Scheme::ScNoma),
            "FDMA" | "OMA" => Ok(Scheme::Fdma),
            _ => {
                let u = t
                    .strip_prefix("FD-NOMA-")
                    .or_else(|| t.strip_suffix("-NOMA"))
                    .ok_or_else(bad)?
                    .parse::<usize>()
                    .map_err(|_| bad())?;
                if u == 0 {
                    return Err(bad());
                }
                Ok(Scheme::FdNoma(u))
            }
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = NomaError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// What the EE column is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// EE of the sum-rate optimal allocation.
    Sumrate,
    /// EE from Dinkelbach maximisation.
    Ee,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// User counts `K` to sweep.
    pub n_users: Vec<usize>,
    /// Common per-user minimum rates to sweep (bit/s).
    pub r_min_bps: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub n_realizations: usize,
    pub rng_seed: u64,
    pub total_bandwidth_hz: f64,
    pub p_max_dbm: f64,
    /// Per-subchannel mask; defaults to the total budget.
    pub p_mask_dbm: Option<f64>,
    pub p_circuit_dbm: f64,
    pub channel: ChannelModel,
    pub objective: Objective,
    pub inner: InnerSolver,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_users: vec![30],
            r_min_bps: vec![3e6],
            schemes: vec![Scheme::ScNoma, Scheme::FdNoma(6), Scheme::FdNoma(4), Scheme::FdNoma(2), Scheme::Fdma],
            n_realizations: 500,
            rng_seed: 1,
            total_bandwidth_hz: 5e6,
            p_max_dbm: 46.0,
            p_mask_dbm: None,
            p_circuit_dbm: 30.0,
            channel: ChannelModel::default(),
            objective: Objective::Ee,
            inner: InnerSolver::Subgradient,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NomaError::InvalidParameter(m));
        if self.n_realizations == 0 {
            return bad("n_realizations must be at least 1".into());
        }
        if self.n_users.is_empty() || self.n_users.contains(&0) {
            return bad("n_users must be a non-empty list of positive counts".into());
        }
        if self.r_min_bps.is_empty() || self.r_min_bps.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("r_min_bps must be a non-empty list of non-negative rates".into());
        }
        if self.schemes.is_empty() {
            return bad("at least one scheme is required".into());
        }
        let c = &self.channel;
        if !(c.min_distance_m > 0.0 && c.cell_radius_m > c.min_distance_m && c.cell_radius_m.is_finite()) {
            return bad("need 0 < min_distance_m < cell_radius_m".into());
        }
        if !(c.shadowing_sigma_db >= 0.0 && c.shadowing_sigma_db.is_finite()) {
            return bad("shadowing_sigma_db must be non-negative".into());
        }
        if !c.noise_density_dbm_hz.is_finite() {
            return bad("noise_density_dbm_hz must be finite".into());
        }
        if !(self.total_bandwidth_hz > 0.0 && self.total_bandwidth_hz.is_finite()) {
            return bad("total_bandwidth_hz must be positive".into());
        }
        for (name, v) in [("p_max_dbm", Some(self.p_max_dbm)), ("p_mask_dbm", self.p_mask_dbm), ("p_circuit_dbm", Some(self.p_circuit_dbm))] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return bad(format!("{name} must be finite"));
                }
            }
        }
        Ok(())
    }

    /// System parameters of `scheme` with `k` users.
    pub fn system_params(&self, scheme: Scheme, k: usize) -> Result<SystemParams> {
        let n = scheme.n_subchannels(k);
        let p_max = dbm_to_w(self.p_max_dbm);
        let mask = self.p_mask_dbm.map(dbm_to_w).unwrap_or(p_max);
        SystemParams::with_uniform_mask(self.total_bandwidth_hz, n, p_max, mask, dbm_to_w(self.p_circuit_dbm), scheme.u_max(k))
    }
}

/// Clusters of one scheme for a channel realization with common demand `r_min_bps`.
pub fn build_system(
    cfg: &ScenarioConfig,
    scheme: Scheme,
    realization: &Realization,
    r_min_bps: f64,
) -> Result<(Vec<ClusterSpec>, SystemParams)> {
    let k = realization.gain.len();
    let params = cfg.system_params(scheme, k)?;
    let cnr = realization.cnr(cfg.channel.noise_density_dbm_hz, params.subchannel_bandwidth_hz());
    let groups = cluster_users(&cnr, params.u_max());
    let clusters = groups
        .into_iter()
        .enumerate()
        .map(|(n, users)| {
            let h = users.iter().map(|&u| cnr[u]).collect();
            let r = vec![r_min_bps; users.len()];
            ClusterSpec::new(n, users, h, r, None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((clusters, params))
}

// ---------------------------------------------------------------------------
// Per-realization evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeOutcome {
    pub feasible: bool,
    /// `sum_n Q^min_n` (NaN when infeasible).
    pub min_power_w: f64,
    /// 0 when infeasible.
    pub sum_rate_bps: f64,
    /// 0 when infeasible.
    pub ee_bps_per_joule: f64,
    /// A solver hit an iteration cap or failed; values come from a fallback.
    pub solver_warning: bool,
}

/// Evaluates one scheme on one realization.
pub fn evaluate_scheme(cfg: &ScenarioConfig, scheme: Scheme, realization: &Realization, r_min_bps: f64) -> Result<SchemeOutcome> {
    let (clusters, params) = build_system(cfg, scheme, realization, r_min_bps)?;
    let q_min = match feasibility_check(&clusters, &params)? {
        Feasibility::Infeasible(_) => {
            return Ok(SchemeOutcome {
                feasible: false,
                min_power_w: f64::NAN,
                sum_rate_bps: 0.0,
                ee_bps_per_joule: 0.0,
                solver_warning: false,
            })
        }
        Feasibility::Feasible { q_min_w } => q_min_w,
    };
    let mut warning = false;
    let sr = maximize_sum_rate(&clusters, &params, None)?;
    warning |= sr.status != crate::model::SolveStatus::Optimal;
    let ee = match cfg.objective {
        Objective::Sumrate => sr.ee_bps_per_joule,
        Objective::Ee => match dinkelbach_solve(&clusters, &params, cfg.inner) {
            Ok(s) => s.report.ee_bps_per_joule,
            // Never abort a sweep: fall back to the (feasible) sum-rate allocation.
            Err(_) => {
                warning = true;
                sr.ee_bps_per_joule
            }
        },
    };
    Ok(SchemeOutcome {
        feasible: true,
        min_power_w: q_min.iter().sum(),
        sum_rate_bps: sr.sum_rate_bps,
        ee_bps_per_joule: ee,
        solver_warning: warning,
    })
}

/// Mixes the user count into the base seed (SplitMix64 finaliser).
pub fn realization_seed(rng_seed: u64, n_users: usize) -> u64 {
    let mut z = rng_seed ^ (n_users as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for realization `index` with `n_users` users.
pub fn realization_rng(rng_seed: u64, n_users: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(rng_seed, n_users));
    rng.set_stream(index);
    rng
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scheme: Scheme,
    pub n_users: usize,
    pub r_min_bps: f64,
    pub outage_probability: f64,
    /// Mean over feasible realizations only; NaN if there were none.
    pub avg_min_power_w: f64,
    /// Mean over all realizations, infeasible ones counted as 0.
    pub avg_sum_rate_bps: f64,
    /// Mean over all realizations, infeasible ones counted as 0.
    pub avg_ee: f64,
    pub n_feasible: usize,
    /// Not part of the CSV output.
    pub n_solver_warnings: usize,
}

fn aggregate(scheme: Scheme, k: usize, r_min: f64, outcomes: &[SchemeOutcome]) -> MetricsRow {
    let total = outcomes.len();
    let feasible: Vec<&SchemeOutcome> = outcomes.iter().filter(|o| o.feasible).collect();
    let nf = feasible.len();
    let power_sum: f64 = feasible.iter().map(|o| o.min_power_w).sum();
    let sr_sum: f64 = outcomes.iter().map(|o| o.sum_rate_bps).sum();
    let ee_sum: f64 = outcomes.iter().map(|o| o.ee_bps_per_joule).sum();
    MetricsRow {
        scheme,
        n_users: k,
        r_min_bps: r_min,
        outage_probability: (total - nf) as f64 / total as f64,
        avg_min_power_w: if nf > 0 { power_sum / nf as f64 } else { f64::NAN },
        avg_sum_rate_bps: sr_sum / total as f64,
        avg_ee: ee_sum / total as f64,
        n_feasible: nf,
        n_solver_warnings: outcomes.iter().filter(|o| o.solver_warning).count(),
    }
}

/// Runs the sweep. `threads = None` uses rayon's default pool size.
///
/// Rows are ordered by user count, then demand, then scheme, following the
/// order in `cfg`.
pub fn run_monte_carlo(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| NomaError::InvalidParameter(format!("thread pool: {e}")))?;

    let mut rows = Vec::new();
    for &k in &cfg.n_users {
        // per realization: [r_min][scheme]
        let per_real: Vec<Vec<Vec<SchemeOutcome>>> = pool.install(|| {
            (0..cfg.n_realizations as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = realization_rng(cfg.rng_seed, k, i);
                    let real = generate_realization(&cfg.channel, k, &mut rng);
                    cfg.r_min_bps
                        .iter()
                        .map(|&r| cfg.schemes.iter().map(|&s| evaluate_scheme(cfg, s, &real, r)).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (ri, &r) in cfg.r_min_bps.iter().enumerate() {
            for (si, &s) in cfg.schemes.iter().enumerate() {
                let outcomes: Vec<SchemeOutcome> = per_real.iter().map(|v| v[ri][si]).collect();
                rows.push(aggregate(s, k, r, &outcomes));
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_parsing() {
        assert_eq!("sc-noma".parse::<Scheme>().unwrap(), Scheme::ScNoma);
        assert_eq!("FDMA".parse::<Scheme>().unwrap(), Scheme::Fdma);
        assert_eq!("4-NOMA".parse::<Scheme>().unwrap(), Scheme::FdNoma(4));
        assert_eq!("fd-noma-6".parse::<Scheme>().unwrap(), Scheme::FdNoma(6));
        assert!("0-NOMA".parse::<Scheme>().is_err());
        assert!("x".parse::<Scheme>().is_err());
        for s in [Scheme::ScNoma, Scheme::FdNoma(2), Scheme::Fdma] {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
    }

    #[test]
    fn subchannel_counts() {
        assert_eq!(Scheme::ScNoma.n_subchannels(30), 1);
        assert_eq!(Scheme::FdNoma(4).n_subchannels(30), 8);
        assert_eq!(Scheme::FdNoma(6).n_subchannels(30), 5);
        assert_eq!(Scheme::Fdma.n_subchannels(30), 30);
    }

    #[test]
    fn zero_demand_never_outage() {
        let cfg = ScenarioConfig { n_users: vec![6], r_min_bps: vec![0.0], n_realizations: 5, ..Default::default() };
        for row in run_monte_carlo(&cfg, Some(2)).unwrap() {
            assert_eq!(row.outage_probability, 0.0, "{row:?}");
        }
    }

    #[test]
    fn single_realization_is_deterministic() {
        let cfg = ScenarioConfig {
            n_users: vec![4],
            r_min_bps: vec![1e5],
            schemes: vec![Scheme::Fdma],
            n_realizations: 1,
            rng_seed: 9,
            ..Default::default()
        };
        let a = run_monte_carlo(&cfg, Some(1)).unwrap();
        let b = run_monte_carlo(&cfg, Some(3)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn config_validation() {
        let ok = ScenarioConfig::default();
        assert!(ok.validate().is_ok());
        assert!(ScenarioConfig { n_realizations: 0, ..ok.clone() }.validate().is_err());
        let mut c = ok.clone();
        c.channel.min_distance_m = 600.0;
        assert!(c.validate().is_err());
        assert!(ScenarioConfig { r_min_bps: vec![-1.0], ..ok }.validate().is_err());
    }
}
