//! Domain types and the rate / energy-efficiency evaluators.
//!
//! Within a [`ClusterSpec`] users are stored weakest first, so the last
//! entry is the cluster head. User `k` sees interference only from users
//! stored after it (the ones it cannot cancel).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{NomaError, Result};

pub const LN_2: f64 = std::f64::consts::LN_2;

/// `log2(1 + x)` evaluated as `ln_1p(x) / ln 2`.
#[inline]
pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

// ---------------------------------------------------------------------------
// System parameters
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    total_bandwidth_hz: f64,
    n_subchannels: usize,
    subchannel_bandwidth_hz: f64,
    p_max_w: f64,
    p_mask_w: Vec<f64>,
    p_circuit_w: f64,
    u_max: usize,
}

fn positive_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(NomaError::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
    }
}

impl SystemParams {
    pub fn new(
        total_bandwidth_hz: f64,
        n_subchannels: usize,
        p_max_w: f64,
        p_mask_w: Vec<f64>,
        p_circuit_w: f64,
        u_max: usize,
    ) -> Result<Self> {
        positive_finite("total_bandwidth_hz", total_bandwidth_hz)?;
        positive_finite("p_max_w", p_max_w)?;
        if n_subchannels == 0 {
            return Err(NomaError::InvalidParameter("n_subchannels must be at least 1".into()));
        }
        if u_max == 0 {
            return Err(NomaError::InvalidParameter("u_max must be at least 1".into()));
        }
        if p_mask_w.len() != n_subchannels {
            return Err(NomaError::ShapeMismatch(format!(
                "{} mask entries for {} subchannels",
                p_mask_w.len(),
                n_subchannels
            )));
        }
        for (n, &m) in p_mask_w.iter().enumerate() {
            positive_finite(&format!("p_mask_w[{n}]"), m)?;
        }
        if !(p_circuit_w.is_finite() && p_circuit_w >= 0.0) {
            return Err(NomaError::InvalidParameter(format!(
                "p_circuit_w must be finite and non-negative, got {p_circuit_w}"
            )));
        }
        Ok(Self {
            total_bandwidth_hz,
            n_subchannels,
            subchannel_bandwidth_hz: total_bandwidth_hz / n_subchannels as f64,
            p_max_w,
            p_mask_w,
            p_circuit_w,
            u_max,
        })
    }

    /// Every subchannel gets the same mask.
    pub fn with_uniform_mask(
        total_bandwidth_hz: f64,
        n_subchannels: usize,
        p_max_w: f64,
        p_mask_w: f64,
        p_circuit_w: f64,
        u_max: usize,
    ) -> Result<Self> {
        Self::new(
            total_bandwidth_hz,
            n_subchannels,
            p_max_w,
            vec![p_mask_w; n_subchannels],
            p_circuit_w,
            u_max,
        )
    }

    pub fn total_bandwidth_hz(&self) -> f64 {
        self.total_bandwidth_hz
    }
    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }
    /// `W_s = W / N`.
    pub fn subchannel_bandwidth_hz(&self) -> f64 {
        self.subchannel_bandwidth_hz
    }
    pub fn p_max_w(&self) -> f64 {
        self.p_max_w
    }
    pub fn p_mask_w(&self) -> &[f64] {
        &self.p_mask_w
    }
    pub fn p_circuit_w(&self) -> f64 {
        self.p_circuit_w
    }
    pub fn u_max(&self) -> usize {
        self.u_max
    }

    /// Mask of the subchannel a cluster occupies.
    pub fn mask_for(&self, cluster: &ClusterSpec) -> f64 {
        self.p_mask_w[cluster.subchannel_index()]
    }

    /// Copy with a different total budget.
    pub fn with_p_max(&self, p_max_w: f64) -> Result<Self> {
        positive_finite("p_max_w", p_max_w)?;
        Ok(Self { p_max_w, ..self.clone() })
    }
}

// ---------------------------------------------------------------------------
// Cluster
// ---------------------------------------------------------------------------

/// Users multiplexed on one subchannel, canonicalised to ascending CNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSpec {
    subchannel_index: usize,
    user_ids: Vec<usize>,
    cnr: Vec<f64>,
    r_min_bps: Vec<f64>,
    r_max_bps: Option<Vec<f64>>,
}

impl ClusterSpec {
    /// Validates and sorts the users by `(cnr, user_id)` ascending.
    pub fn new(
        subchannel_index: usize,
        user_ids: Vec<usize>,
        cnr: Vec<f64>,
        r_min_bps: Vec<f64>,
        r_max_bps: Option<Vec<f64>>,
    ) -> Result<Self> {
        let len = cnr.len();
        if len == 0 {
            return Err(NomaError::InvalidParameter("a cluster needs at least one user".into()));
        }
        if user_ids.len() != len || r_min_bps.len() != len {
            return Err(NomaError::ShapeMismatch(format!(
                "cluster on subchannel {subchannel_index}: {} ids, {} CNRs, {} minimum rates",
                user_ids.len(),
                len,
                r_min_bps.len()
            )));
        }
        if let Some(rm) = &r_max_bps {
            if rm.len() != len {
                return Err(NomaError::ShapeMismatch(format!(
                    "cluster on subchannel {subchannel_index}: {} maximum rates for {len} users",
                    rm.len()
                )));
            }
        }
        for k in 0..len {
            positive_finite(&format!("cnr[{k}]"), cnr[k])?;
            if !(r_min_bps[k].is_finite() && r_min_bps[k] >= 0.0) {
                return Err(NomaError::InvalidParameter(format!(
                    "r_min_bps[{k}] must be finite and non-negative, got {}",
                    r_min_bps[k]
                )));
            }
            if let Some(rm) = &r_max_bps {
                if rm[k].is_nan() || rm[k] < r_min_bps[k] {
                    return Err(NomaError::InfeasibleBox { user: user_ids[k] });
                }
            }
        }
        let mut seen = user_ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(NomaError::InvalidParameter(format!(
                "duplicate user id in cluster on subchannel {subchannel_index}"
            )));
        }

        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| cnr[a].total_cmp(&cnr[b]).then(user_ids[a].cmp(&user_ids[b])));
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            subchannel_index,
            user_ids: order.iter().map(|&i| user_ids[i]).collect(),
            cnr: pick(&cnr),
            r_min_bps: pick(&r_min_bps),
            r_max_bps: r_max_bps.as_deref().map(pick),
        })
    }

    /// Cluster whose user ids are `0..len` in the given order.
    pub fn simple(subchannel_index: usize, cnr: Vec<f64>, r_min_bps: Vec<f64>) -> Result<Self> {
        let ids = (0..cnr.len()).collect();
        Self::new(subchannel_index, ids, cnr, r_min_bps, None)
    }

    pub fn subchannel_index(&self) -> usize {
        self.subchannel_index
    }
    pub fn user_ids(&self) -> &[usize] {
        &self.user_ids
    }
    pub fn cnr(&self) -> &[f64] {
        &self.cnr
    }
    pub fn r_min_bps(&self) -> &[f64] {
        &self.r_min_bps
    }
    pub fn r_max_bps(&self) -> Option<&[f64]> {
        self.r_max_bps.as_deref()
    }
    pub fn len(&self) -> usize {
        self.cnr.len()
    }
    /// Always false for a constructed cluster.
    pub fn is_empty(&self) -> bool {
        self.cnr.is_empty()
    }
    /// Storage index of the cluster head (strongest user).
    pub fn head(&self) -> usize {
        self.cnr.len() - 1
    }

    /// Same users with new minimum-rate demands (in canonical order).
    pub fn with_r_min(&self, r_min_bps: Vec<f64>) -> Result<Self> {
        Self::new(
            self.subchannel_index,
            self.user_ids.clone(),
            self.cnr.clone(),
            r_min_bps,
            self.r_max_bps.clone(),
        )
    }

    /// Same cluster without the user at storage index `k`; `None` if it was the last one.
    pub fn without_user(&self, k: usize) -> Option<Self> {
        if self.len() == 1 {
            return None;
        }
        let drop = |v: &[f64]| {
            v.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, &x)| x).collect::<Vec<_>>()
        };
        Some(Self {
            subchannel_index: self.subchannel_index,
            user_ids: self
                .user_ids
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, &x)| x)
                .collect(),
            cnr: drop(&self.cnr),
            r_min_bps: drop(&self.r_min_bps),
            r_max_bps: self.r_max_bps.as_deref().map(drop),
        })
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn check_powers(cluster: &ClusterSpec, powers: &[f64], k: usize) -> Result<()> {
    if powers.len() != cluster.len() {
        return Err(NomaError::ShapeMismatch(format!(
            "{} powers for a cluster of {} users",
            powers.len(),
            cluster.len()
        )));
    }
    if k >= cluster.len() {
        return Err(NomaError::IndexOutOfRange { index: k, len: cluster.len() });
    }
    Ok(())
}

/// SINR of user `k` decoding its own signal after cancelling weaker users.
pub fn sinr(cluster: &ClusterSpec, powers: &[f64], k: usize) -> Result<f64> {
    check_powers(cluster, powers, k)?;
    let h = cluster.cnr[k];
    let interference: f64 = powers[k + 1..].iter().sum();
    Ok(powers[k] * h / (h * interference + 1.0))
}

/// Achievable rate of user `k` in bit/s.
pub fn rate_bps(cluster: &ClusterSpec, powers: &[f64], k: usize, ws_hz: f64) -> Result<f64> {
    Ok(ws_hz * log2_1p(sinr(cluster, powers, k)?))
}

// ---------------------------------------------------------------------------
// Allocation and report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerAllocation {
    /// `powers_w[n][k]`, in each cluster's canonical order.
    pub powers_w: Vec<Vec<f64>>,
    /// `q_n`, the total power on cluster `n`.
    pub cluster_budgets_w: Vec<f64>,
}

impl PowerAllocation {
    /// Budgets are the row sums.
    pub fn from_powers(powers_w: Vec<Vec<f64>>) -> Self {
        let cluster_budgets_w = powers_w.iter().map(|p| p.iter().sum()).collect();
        Self { powers_w, cluster_budgets_w }
    }

    pub fn zeros(clusters: &[ClusterSpec]) -> Self {
        Self::from_powers(clusters.iter().map(|c| vec![0.0; c.len()]).collect())
    }

    /// Total transmit power `sum_n q_n`.
    pub fn total_power_w(&self) -> f64 {
        self.cluster_budgets_w.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Rates and objectives of an allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Objectives {
    pub rates_bps: Vec<Vec<f64>>,
    pub sum_rate_bps: f64,
    /// Transmit plus circuit power.
    pub consumed_power_w: f64,
    pub ee_bps_per_joule: f64,
}

/// Sum-rate and energy efficiency of `allocation`.
pub fn system_objectives(
    clusters: &[ClusterSpec],
    allocation: &PowerAllocation,
    params: &SystemParams,
) -> Result<Objectives> {
    if allocation.powers_w.len() != clusters.len()
        || allocation.cluster_budgets_w.len() != clusters.len()
    {
        return Err(NomaError::ShapeMismatch(format!(
            "allocation has {} clusters, system has {}",
            allocation.powers_w.len(),
            clusters.len()
        )));
    }
    let ws = params.subchannel_bandwidth_hz();
    let mut rates = Vec::with_capacity(clusters.len());
    let mut sum_rate = 0.0;
    for (c, p) in clusters.iter().zip(&allocation.powers_w) {
        let mut row = Vec::with_capacity(c.len());
        for k in 0..c.len() {
            let r = rate_bps(c, p, k, ws)?;
            sum_rate += r;
            row.push(r);
        }
        rates.push(row);
    }
    let consumed = allocation.total_power_w() + params.p_circuit_w();
    let ee = if consumed > 0.0 { sum_rate / consumed } else { 0.0 };
    Ok(Objectives {
        rates_bps: rates,
        sum_rate_bps: sum_rate,
        consumed_power_w: consumed,
        ee_bps_per_joule: ee,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub allocation: PowerAllocation,
    pub rates_bps: Vec<Vec<f64>>,
    pub sum_rate_bps: f64,
    pub ee_bps_per_joule: f64,
    /// Stage name to iteration count.
    pub iterations: BTreeMap<String, usize>,
    pub status: SolveStatus,
}

impl SolveReport {
    pub fn build(
        clusters: &[ClusterSpec],
        allocation: PowerAllocation,
        params: &SystemParams,
        iterations: BTreeMap<String, usize>,
        status: SolveStatus,
    ) -> Result<Self> {
        let obj = system_objectives(clusters, &allocation, params)?;
        Ok(Self {
            allocation,
            rates_bps: obj.rates_bps,
            sum_rate_bps: obj.sum_rate_bps,
            ee_bps_per_joule: obj.ee_bps_per_joule,
            iterations,
            status,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_user() -> ClusterSpec {
        ClusterSpec::simple(0, vec![1.0, 4.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn sinr_examples() {
        let single = ClusterSpec::simple(0, vec![3.0], vec![0.0]).unwrap();
        assert_eq!(sinr(&single, &[2.0], 0).unwrap(), 6.0);

        let c = two_user();
        assert!((sinr(&c, &[1.5, 0.5], 0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sinr(&c, &[0.0, 0.0], 0).unwrap(), 0.0);
        assert_eq!(sinr(&c, &[0.0, 0.0], 1).unwrap(), 0.0);
        assert!(matches!(sinr(&c, &[1.0, 1.0], 2), Err(NomaError::IndexOutOfRange { .. })));
        assert!(matches!(sinr(&c, &[1.0], 0), Err(NomaError::ShapeMismatch(_))));
    }

    #[test]
    fn rate_examples() {
        let c = two_user();
        let p = [1.5, 0.5];
        assert!((rate_bps(&c, &p, 0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((rate_bps(&c, &p, 1, 1.0).unwrap() - 3f64.log2()).abs() < 1e-15);
        // sinr = 3 on a 2 Hz channel
        let s = ClusterSpec::simple(0, vec![1.0], vec![0.0]).unwrap();
        assert!((rate_bps(&s, &[3.0], 0, 2.0).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(rate_bps(&s, &[0.0], 0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn objective_examples() {
        let s = ClusterSpec::simple(0, vec![1.0], vec![0.0]).unwrap();
        let params = SystemParams::with_uniform_mask(1.0, 1, 10.0, 10.0, 1.0, 1).unwrap();
        let zero = system_objectives(&[s.clone()], &PowerAllocation::zeros(&[s.clone()]), &params)
            .unwrap();
        assert_eq!(zero.sum_rate_bps, 0.0);
        assert_eq!(zero.ee_bps_per_joule, 0.0);

        let one = PowerAllocation::from_powers(vec![vec![1.0]]);
        let o = system_objectives(&[s], &one, &params).unwrap();
        assert!((o.sum_rate_bps - 1.0).abs() < 1e-15);
        assert!((o.ee_bps_per_joule - 0.5).abs() < 1e-15);

        let params2 = SystemParams::with_uniform_mask(1.0, 1, 10.0, 10.0, 1.0, 2).unwrap();
        let alloc = PowerAllocation::from_powers(vec![vec![1.5, 0.5]]);
        let o = system_objectives(&[two_user()], &alloc, &params2).unwrap();
        let expect = (1.0 + 3f64.log2()) / 3.0;
        assert!((o.ee_bps_per_joule - expect).abs() < 1e-15);
    }

    #[test]
    fn canonical_order_and_ties() {
        let c = ClusterSpec::new(2, vec![7, 3, 5], vec![4.0, 1.0, 1.0], vec![0.1, 0.2, 0.3], None)
            .unwrap();
        assert_eq!(c.user_ids(), &[3, 5, 7]);
        assert_eq!(c.cnr(), &[1.0, 1.0, 4.0]);
        assert_eq!(c.r_min_bps(), &[0.2, 0.3, 0.1]);
        assert_eq!(c.head(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ClusterSpec::simple(0, vec![], vec![]).is_err());
        assert!(ClusterSpec::simple(0, vec![0.0], vec![1.0]).is_err());
        assert!(ClusterSpec::simple(0, vec![1.0], vec![-1.0]).is_err());
        assert!(matches!(
            ClusterSpec::new(0, vec![0], vec![1.0], vec![2.0], Some(vec![1.0])),
            Err(NomaError::InfeasibleBox { user: 0 })
        ));
        assert!(ClusterSpec::new(0, vec![1, 1], vec![1.0, 2.0], vec![0.0, 0.0], None).is_err());
        assert!(SystemParams::new(1.0, 2, 1.0, vec![1.0], 0.0, 1).is_err());
        assert!(SystemParams::new(1.0, 1, 0.0, vec![1.0], 0.0, 1).is_err());
        assert!(SystemParams::new(1.0, 1, 1.0, vec![1.0], -1.0, 1).is_err());
    }

    #[test]
    fn subchannel_bandwidth_is_single_division() {
        let p = SystemParams::with_uniform_mask(5e6, 7, 1.0, 1.0, 0.0, 1).unwrap();
        assert_eq!(p.subchannel_bandwidth_hz(), 5e6 / 7.0);
    }
}
