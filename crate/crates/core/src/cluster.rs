//! Single-subchannel machinery.
//!
//! At the optimum every non-head user receives exactly enough power for its
//! minimum rate and the head absorbs the rest. That makes every quantity
//! here a closed form in the cluster budget `q`.
//!
//! Users are indexed weakest first (index 0) and the head is last.

use serde::Serialize;

use crate::error::{InfeasibilityReport, MaskViolation, NomaError, Result};
use crate::model::{ClusterSpec, SystemParams, LN_2};

/// Relative slack allowed on the `[Q^min, P^mask]` box before
/// [`NomaError::BudgetOutOfRange`] is raised.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// `2^(r/ws) - 1`.
#[inline]
pub fn beta_from_rate(r_bps: f64, ws_hz: f64) -> f64 {
    (r_bps / ws_hz * LN_2).exp_m1()
}

/// Per-cluster constants derived from CNRs and rate demands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterConstants {
    /// `2^(R^min/W_s) - 1`: SINR each user must reach.
    pub beta_min: Vec<f64>,
    /// `beta_min / (1 + beta_min)`: share of the remaining budget a pinned user takes.
    pub beta_frac: Vec<f64>,
    /// Coefficient of `q` in each non-head power; the head entry holds `alpha`.
    pub a_per_user: Vec<f64>,
    /// Constant term of each non-head power; zero in the head slot.
    pub c_per_user: Vec<f64>,
    /// Head power is `alpha * q - c_total`.
    pub alpha: f64,
    pub c_total: f64,
    pub q_min_w: f64,
    /// Total power at which every user sits at its maximum rate.
    pub q_max_w: Option<f64>,
}

impl ClusterConstants {
    pub fn compute(cluster: &ClusterSpec, ws_hz: f64) -> Self {
        let h = cluster.cnr();
        let len = cluster.len();
        let beta_min: Vec<f64> =
            cluster.r_min_bps().iter().map(|&r| beta_from_rate(r, ws_hz)).collect();
        let beta_frac: Vec<f64> = beta_min
            .iter()
            .map(|&b| if b.is_finite() { b / (1.0 + b) } else { 1.0 })
            .collect();

        let mut a = vec![0.0; len];
        let mut c = vec![0.0; len];
        let (mut sum_a, mut sum_c) = (0.0, 0.0);
        let mut alpha = 1.0;
        for k in 0..len - 1 {
            a[k] = beta_frac[k] * (1.0 - sum_a);
            c[k] = beta_frac[k] * (1.0 / h[k] - sum_c);
            sum_a += a[k];
            sum_c += c[k];
            alpha *= 1.0 - beta_frac[k];
        }
        a[len - 1] = alpha;

        let (_, q_min_w) = min_power_from_betas(h, &beta_min);
        let q_max_w = cluster.r_max_bps().map(|rm| {
            let b: Vec<f64> = rm.iter().map(|&r| beta_from_rate(r, ws_hz)).collect();
            min_power_from_betas(h, &b).1
        });

        Self { beta_min, beta_frac, a_per_user: a, c_per_user: c, alpha, c_total: sum_c, q_min_w, q_max_w }
    }

    /// Head power needed for the head's own minimum rate.
    pub fn head_min_power(&self, cluster: &ClusterSpec) -> f64 {
        let k = cluster.head();
        self.beta_min[k] / cluster.cnr()[k]
    }

    /// Effective CNR of the cluster seen as a single virtual user.
    pub fn h_eff(&self, cluster: &ClusterSpec) -> f64 {
        self.alpha * cluster.cnr()[cluster.head()]
    }

    /// `c_total / alpha`: offset between `q` and the virtual budget.
    pub fn shift(&self) -> f64 {
        self.c_total / self.alpha
    }
}

/// Backward recursion `p_k = beta_k (1/h_k + sum_{j>k} p_j)` from the head down.
fn min_power_from_betas(h: &[f64], beta: &[f64]) -> (Vec<f64>, f64) {
    let len = h.len();
    let mut p = vec![0.0; len];
    let head = len - 1;
    p[head] = beta[head] / h[head];
    powers_below_head(h, beta, &mut p);
    let total = p.iter().sum();
    (p, total)
}

/// Fills `p[..head]` given `p[head]`, pinning every non-head user to its SINR target.
fn powers_below_head(h: &[f64], beta: &[f64], p: &mut [f64]) {
    let head = h.len() - 1;
    let mut above = p[head];
    for k in (0..head).rev() {
        p[k] = if beta[k] == 0.0 { 0.0 } else { beta[k] * (1.0 / h[k] + above) };
        above += p[k];
    }
}

/// Minimum powers meeting every demand and their total `Q^min`.
pub fn min_power_allocation(cluster: &ClusterSpec, ws_hz: f64) -> (Vec<f64>, f64) {
    let beta: Vec<f64> = cluster.r_min_bps().iter().map(|&r| beta_from_rate(r, ws_hz)).collect();
    min_power_from_betas(cluster.cnr(), &beta)
}

/// Optimal powers when the head receives `p_head`; every other user is pinned.
pub fn powers_for_head_power(cluster: &ClusterSpec, consts: &ClusterConstants, p_head: f64) -> Vec<f64> {
    let mut p = vec![0.0; cluster.len()];
    p[cluster.head()] = p_head.max(0.0);
    powers_below_head(cluster.cnr(), &consts.beta_min, &mut p);
    p
}

fn check_budget(q: f64, lo: f64, hi: f64) -> Result<()> {
    let below = q < lo - BUDGET_TOLERANCE * lo;
    let above = q > hi + BUDGET_TOLERANCE * hi;
    if !q.is_finite() || below || above {
        return Err(NomaError::BudgetOutOfRange { q, lo, hi });
    }
    Ok(())
}

/// Sum-rate optimal split of budget `q` inside one cluster.
///
/// The head gets `alpha*q - c_total`; the rest follow from the recursion, so
/// non-head rates equal their demands and the powers sum to `q`.
pub fn intra_cluster_optimal(cluster: &ClusterSpec, q: f64, p_mask: f64, ws_hz: f64) -> Result<Vec<f64>> {
    let consts = ClusterConstants::compute(cluster, ws_hz);
    check_budget(q, consts.q_min_w, p_mask)?;
    // alpha*q - c_total loses digits near Q^min; anchor on the exact head minimum.
    let p_head = consts.head_min_power(cluster) + consts.alpha * (q - consts.q_min_w);
    Ok(powers_for_head_power(cluster, &consts, p_head))
}

/// Large-CNR approximation: powers proportional to `q` with the constant terms dropped.
pub fn approx_intra_powers(cluster: &ClusterSpec, q: f64, ws_hz: f64) -> Vec<f64> {
    let consts = ClusterConstants::compute(cluster, ws_hz);
    consts.a_per_user.iter().map(|&a| a * q).collect()
}

// ---------------------------------------------------------------------------
// Feasibility
// ---------------------------------------------------------------------------

/// Structural checks shared by every multi-cluster solver.
pub fn validate_system(clusters: &[ClusterSpec], params: &SystemParams) -> Result<()> {
    let mut used = vec![false; params.n_subchannels()];
    for c in clusters {
        let s = c.subchannel_index();
        if s >= params.n_subchannels() {
            return Err(NomaError::ShapeMismatch(format!(
                "subchannel index {s} but only {} subchannels",
                params.n_subchannels()
            )));
        }
        if used[s] {
            return Err(NomaError::ShapeMismatch(format!("subchannel {s} has two clusters")));
        }
        used[s] = true;
        if c.len() > params.u_max() {
            return Err(NomaError::InvalidParameter(format!(
                "cluster on subchannel {s} has {} users, u_max is {}",
                c.len(),
                params.u_max()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Feasibility {
    Feasible { q_min_w: Vec<f64> },
    Infeasible(InfeasibilityReport),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// Feasible iff every `Q^min_n <= P^mask_n` and `sum Q^min_n <= P^max`.
pub fn feasibility_check(clusters: &[ClusterSpec], params: &SystemParams) -> Result<Feasibility> {
    validate_system(clusters, params)?;
    let ws = params.subchannel_bandwidth_hz();
    let q_min: Vec<f64> = clusters.iter().map(|c| min_power_allocation(c, ws).1).collect();
    let mut violations = Vec::new();
    for (i, (c, &q)) in clusters.iter().zip(&q_min).enumerate() {
        let mask = params.mask_for(c);
        if q > mask {
            violations.push(MaskViolation {
                cluster: i,
                subchannel_index: c.subchannel_index(),
                q_min_w: q,
                p_mask_w: mask,
            });
        }
    }
    let total: f64 = q_min.iter().sum();
    let shortfall = (total - params.p_max_w()).max(0.0);
    if violations.is_empty() && shortfall == 0.0 {
        Ok(Feasibility::Feasible { q_min_w: q_min })
    } else {
        Ok(Feasibility::Infeasible(InfeasibilityReport {
            mask_violations: violations,
            total_q_min_w: total,
            p_max_w: params.p_max_w(),
            budget_shortfall_w: shortfall,
        }))
    }
}

// ---------------------------------------------------------------------------
// Maximum-rate caps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MaxRateStatus {
    /// No user hit its maximum rate.
    Uncapped,
    /// Users above `pivot` sit at their maximum rate; `pivot` holds the remainder.
    Capped { pivot: usize },
    /// Every user is at its maximum rate and `budget - q_max_w` is left unused.
    BudgetSlack { q_max_w: f64 },
}

/// Optimal split of `budget` when users also have maximum rates.
///
/// Starting from [`intra_cluster_optimal`], the head is capped at its
/// maximum-rate power and the surplus handed to the next user down; this
/// repeats until a user stays below its cap.
pub fn max_rate_allocation(cluster: &ClusterSpec, budget: f64, ws_hz: f64) -> Result<(Vec<f64>, MaxRateStatus)> {
    let r_min = cluster.r_min_bps();
    let r_max: Vec<f64> = match cluster.r_max_bps() {
        Some(r) => r.to_vec(),
        None => vec![f64::INFINITY; cluster.len()],
    };
    for k in 0..cluster.len() {
        if r_max[k] < r_min[k] {
            return Err(NomaError::InfeasibleBox { user: cluster.user_ids()[k] });
        }
    }
    let mut p = intra_cluster_optimal(cluster, budget, f64::INFINITY, ws_hz)?;
    let h = cluster.cnr();
    let beta_max: Vec<f64> = r_max.iter().map(|&r| beta_from_rate(r, ws_hz)).collect();

    let mut k = cluster.head();
    let status = loop {
        let above: f64 = p[k + 1..].iter().sum();
        let cap = beta_max[k] * (1.0 / h[k] + above);
        if p[k] <= cap {
            break if k == cluster.head() { MaxRateStatus::Uncapped } else { MaxRateStatus::Capped { pivot: k } };
        }
        let excess = p[k] - cap;
        p[k] = cap;
        if k == 0 {
            break MaxRateStatus::BudgetSlack { q_max_w: p.iter().sum() };
        }
        p[k - 1] += excess;
        k -= 1;
    };
    Ok((p, status))
}

// ---------------------------------------------------------------------------
// Admission control
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedUser {
    pub user_id: usize,
    pub subchannel_index: usize,
    pub min_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissionOutcome {
    /// Remaining clusters; emptied subchannels are removed.
    pub clusters: Vec<ClusterSpec>,
    /// In drop order.
    pub dropped: Vec<DroppedUser>,
}

/// Greedily removes the most power-hungry (user, subchannel) pair until the system is feasible.
///
/// Ties on minimum power go to the weaker CNR, then the lower subchannel
/// index, then the lower user id.
pub fn admission_control(clusters: &[ClusterSpec], params: &SystemParams) -> Result<AdmissionOutcome> {
    let ws = params.subchannel_bandwidth_hz();
    let mut current = clusters.to_vec();
    let mut dropped = Vec::new();
    while !feasibility_check(&current, params)?.is_feasible() {
        let mut best: Option<(usize, usize, f64)> = None;
        for (ci, c) in current.iter().enumerate() {
            let (p, _) = min_power_allocation(c, ws);
            for k in 0..c.len() {
                let better = match best {
                    None => true,
                    Some((bc, bk, bp)) => {
                        let b = &current[bc];
                        p[k].total_cmp(&bp).reverse().then(c.cnr()[k].total_cmp(&b.cnr()[bk])).then(
                            c.subchannel_index().cmp(&b.subchannel_index()),
                        )
                            .then(c.user_ids()[k].cmp(&b.user_ids()[bk]))
                            .is_lt()
                    }
                };
                if better {
                    best = Some((ci, k, p[k]));
                }
            }
        }
        let (ci, k, pw) = best.expect("an infeasible system has at least one user");
        let c = &current[ci];
        dropped.push(DroppedUser {
            user_id: c.user_ids()[k],
            subchannel_index: c.subchannel_index(),
            min_power_w: pw,
        });
        match c.without_user(k) {
            Some(rest) => current[ci] = rest,
            None => {
                current.remove(ci);
            }
        }
    }
    Ok(AdmissionOutcome { clusters: current, dropped })
}

// ---------------------------------------------------------------------------
// Imperfect CSI
// ---------------------------------------------------------------------------

/// True when CNR estimation errors within `[lower, upper]` can never flip the decoding order.
///
/// The estimated CNRs are the cluster's own. For every pair with
/// `h_i > h_j` this requires `h_i + lower_i >= h_j + upper_j`.
pub fn sic_outage_zero(cluster: &ClusterSpec, lower: &[f64], upper: &[f64]) -> Result<bool> {
    let len = cluster.len();
    if lower.len() != len || upper.len() != len {
        return Err(NomaError::ShapeMismatch(format!(
            "{} lower and {} upper bounds for {len} users",
            lower.len(),
            upper.len()
        )));
    }
    for k in 0..len {
        if !(lower[k] <= 0.0 && upper[k] >= 0.0) {
            return Err(NomaError::InvalidParameter(format!(
                "error bounds of user {k} must satisfy lower <= 0 <= upper"
            )));
        }
    }
    let h = cluster.cnr();
    for i in 0..len {
        for j in 0..len {
            if h[i] > h[j] && h[i] + lower[i] < h[j] + upper[j] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
