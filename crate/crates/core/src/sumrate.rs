//! Sum-rate maximisation across subchannels.
//!
//! Fixing each cluster's non-head users at their demands turns cluster `n`
//! into a single virtual user with CNR `H_n = alpha_n * h_head` and budget
//! `q~_n = q_n - c_n/alpha_n`. The multi-cluster problem is then ordinary
//! water-filling over boxes `[Q~min_n, P~mask_n]` with one total budget.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cluster::{feasibility_check, powers_for_head_power, ClusterConstants, Feasibility};
use crate::error::{NomaError, Result};
use crate::model::{ClusterSpec, PowerAllocation, SolveReport, SolveStatus, SystemParams, LN_2};

/// Relative budget residual at which bisection stops.
pub const WATERFILL_TOLERANCE: f64 = 1e-8;
pub const WATERFILL_MAX_ITERATIONS: usize = 200;
/// Default threshold on `c_n / (alpha_n P^max / N)` for the equal-power test.
pub const EQUAL_POWER_C_THRESHOLD: f64 = 1e-3;

/// The transformed FDMA problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VirtualOmaSystem {
    pub h_eff: Vec<f64>,
    pub q_tilde_min: Vec<f64>,
    pub p_tilde_mask: Vec<f64>,
    pub p_tilde_max: f64,
    pub shift: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per-cluster constants; empty for systems built with [`VirtualOmaSystem::plain`].
    pub constants: Vec<ClusterConstants>,
}

impl VirtualOmaSystem {
    /// An FDMA system given directly in virtual coordinates (no shifts, unit weights).
    pub fn plain(h_eff: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, p_tilde_max: f64) -> Self {
        let n = h_eff.len();
        Self {
            h_eff,
            q_tilde_min: lo,
            p_tilde_mask: hi,
            p_tilde_max,
            shift: vec![0.0; n],
            weights: vec![1.0; n],
            constants: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.h_eff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_eff.is_empty()
    }

    /// Replaces the head weights.
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(NomaError::ShapeMismatch(format!(
                "{} weights for {} clusters",
                weights.len(),
                self.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(NomaError::InvalidParameter(format!("weights must be positive, got {w}")));
        }
        self.weights = weights.to_vec();
        Ok(self)
    }

    /// Clamped water level allocation `clamp(w_n L - 1/H_n)`.
    pub fn allocation_at_level(&self, level: f64) -> Vec<f64> {
        (0..self.len())
            .map(|n| clamp_level(self.weights[n] * level - 1.0 / self.h_eff[n], self.q_tilde_min[n], self.p_tilde_mask[n]))
            .collect()
    }

    /// Maps virtual budgets back to per-user powers of the original clusters.
    pub fn to_allocation(&self, clusters: &[ClusterSpec], q_tilde: &[f64]) -> Result<PowerAllocation> {
        if clusters.len() != self.len() || q_tilde.len() != self.len() || self.constants.len() != self.len() {
            return Err(NomaError::ShapeMismatch("virtual system does not match clusters".into()));
        }
        let powers = clusters
            .iter()
            .zip(&self.constants)
            .zip(q_tilde)
            .map(|((c, k), &q)| powers_for_head_power(c, k, k.alpha * q))
            .collect();
        Ok(PowerAllocation::from_powers(powers))
    }

    /// Sum of head rates in bit/s for virtual budgets `q_tilde`.
    pub fn head_sum_rate(&self, q_tilde: &[f64], ws_hz: f64) -> f64 {
        q_tilde.iter().zip(&self.h_eff).map(|(&q, &h)| ws_hz * (q * h).ln_1p() / LN_2).sum()
    }
}

#[inline]
fn clamp_level(x: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo {
        lo
    } else if x >= hi {
        hi
    } else {
        x
    }
}

/// Builds the virtual system; fails with [`NomaError::Infeasible`] when the demands cannot be met.
pub fn to_virtual_oma(clusters: &[ClusterSpec], params: &SystemParams) -> Result<VirtualOmaSystem> {
    if let Feasibility::Infeasible(report) = feasibility_check(clusters, params)? {
        return Err(NomaError::Infeasible(report));
    }
    let ws = params.subchannel_bandwidth_hz();
    let n = clusters.len();
    let mut v = VirtualOmaSystem {
        h_eff: Vec::with_capacity(n),
        q_tilde_min: Vec::with_capacity(n),
        p_tilde_mask: Vec::with_capacity(n),
        p_tilde_max: params.p_max_w(),
        shift: Vec::with_capacity(n),
        weights: vec![1.0; n],
        constants: Vec::with_capacity(n),
    };
    let mut total_shift = 0.0;
    for c in clusters {
        let k = ClusterConstants::compute(c, ws);
        let h = k.h_eff(c);
        let shift = k.shift();
        // Q^min - shift simplifies to the head's own minimum over alpha.
        let lo = k.head_min_power(c) / k.alpha;
        v.h_eff.push(h);
        v.q_tilde_min.push(lo);
        v.p_tilde_mask.push((params.mask_for(c) - shift).max(lo));
        v.shift.push(shift);
        v.constants.push(k);
        total_shift += shift;
    }
    let sum_lo: f64 = v.q_tilde_min.iter().sum();
    v.p_tilde_max = (params.p_max_w() - total_shift).max(sum_lo);
    Ok(v)
}

// ---------------------------------------------------------------------------
// Water-filling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillResult {
    pub q_tilde: Vec<f64>,
    /// Multiplier of the total-budget constraint (0 when it is slack).
    pub nu: f64,
    pub iterations: usize,
    /// `|sum q~ - P~max| / P~max` (0 when the budget is slack).
    pub relative_residual: f64,
    pub status: SolveStatus,
}

/// Bisection water-filling on the virtual system.
///
/// Bisection runs on the water level geometrically; at each step the
/// current active set is also solved exactly, which ends the search as soon
/// as the bracket isolates the right set.
pub fn waterfill(v: &VirtualOmaSystem, ws_hz: f64) -> Result<WaterfillResult> {
    let n = v.len();
    let lo = &v.q_tilde_min;
    let hi = &v.p_tilde_mask;
    let budget = v.p_tilde_max;
    let finish = |q: Vec<f64>, level: f64, it: usize, status| {
        let total: f64 = q.iter().sum();
        let residual = if budget > 0.0 { (total - budget).abs() / budget } else { 0.0 };
        WaterfillResult { q_tilde: q, nu: ws_hz / (LN_2 * level), iterations: it, relative_residual: residual, status }
    };
    if n == 0 {
        return Ok(WaterfillResult { q_tilde: vec![], nu: 0.0, iterations: 0, relative_residual: 0.0, status: SolveStatus::Optimal });
    }

    let sum_hi: f64 = hi.iter().sum();
    if budget >= sum_hi {
        return Ok(WaterfillResult {
            q_tilde: hi.clone(),
            nu: 0.0,
            iterations: 0,
            relative_residual: 0.0,
            status: SolveStatus::Optimal,
        });
    }
    let sum_lo: f64 = lo.iter().sum();
    if budget <= sum_lo + 1e-12 * sum_lo.max(budget) {
        return Ok(finish(lo.clone(), 0.0, 0, SolveStatus::Optimal));
    }

    let g = |level: f64| v.allocation_at_level(level).iter().sum::<f64>() - budget;
    let max_inv_h = v.h_eff.iter().map(|h| 1.0 / h).fold(0.0, f64::max);
    let min_w = v.weights.iter().copied().fold(f64::INFINITY, f64::min);
    let max_wh = v.weights.iter().zip(&v.h_eff).map(|(w, h)| w * h).fold(0.0, f64::max);
    let mut level_hi = (budget + max_inv_h) / min_w;
    let mut level_lo = 1.0 / (10.0 * max_wh);
    let mut widen = 0;
    while !(g(level_hi) >= 0.0 && g(level_lo) <= 0.0) {
        widen += 1;
        if widen > 5 {
            return Err(NomaError::BracketFailure);
        }
        level_hi *= 10.0;
        level_lo /= 10.0;
    }

    let tol = WATERFILL_TOLERANCE * budget;
    for it in 1..=WATERFILL_MAX_ITERATIONS {
        let level = (level_lo * level_hi).sqrt();
        if let Some(exact) = exact_level(v, level) {
            let q = v.allocation_at_level(exact);
            let residual = (q.iter().sum::<f64>() - budget).abs();
            if residual <= tol {
                return Ok(finish(q, exact, it, SolveStatus::Optimal));
            }
        }
        let r = g(level);
        if r.abs() <= tol {
            return Ok(finish(v.allocation_at_level(level), level, it, SolveStatus::Optimal));
        }
        if r > 0.0 {
            level_hi = level;
        } else {
            level_lo = level;
        }
    }
    let level = (level_lo * level_hi).sqrt();
    Ok(finish(v.allocation_at_level(level), level, WATERFILL_MAX_ITERATIONS, SolveStatus::MaxIterations))
}

/// Exact level assuming the free/clamped partition at `level` is the optimal one.
/// Returns `None` if the partition changes at the computed level.
fn exact_level(v: &VirtualOmaSystem, level: f64) -> Option<f64> {
    #[derive(PartialEq)]
    enum Side {
        Low,
        Free,
        High,
    }
    let side = |n: usize, l: f64| {
        let x = v.weights[n] * l - 1.0 / v.h_eff[n];
        if x <= v.q_tilde_min[n] {
            Side::Low
        } else if x >= v.p_tilde_mask[n] {
            Side::High
        } else {
            Side::Free
        }
    };
    let (mut fixed, mut inv_h, mut w) = (0.0, 0.0, 0.0);
    for n in 0..v.len() {
        match side(n, level) {
            Side::Low => fixed += v.q_tilde_min[n],
            Side::High => fixed += v.p_tilde_mask[n],
            Side::Free => {
                inv_h += 1.0 / v.h_eff[n];
                w += v.weights[n];
            }
        }
    }
    if w == 0.0 {
        return None;
    }
    let exact = (v.p_tilde_max - fixed + inv_h) / w;
    if !(exact > 0.0 && exact.is_finite()) {
        return None;
    }
    (0..v.len()).all(|n| side(n, exact) == side(n, level)).then_some(exact)
}

// ---------------------------------------------------------------------------
// Full solve
// ---------------------------------------------------------------------------

/// Maximises the (head-weighted) sum-rate subject to all minimum-rate demands.
pub fn maximize_sum_rate(
    clusters: &[ClusterSpec],
    params: &SystemParams,
    weights: Option<&[f64]>,
) -> Result<SolveReport> {
    let mut v = to_virtual_oma(clusters, params)?;
    if let Some(w) = weights {
        v = v.with_weights(w)?;
    }
    let wf = waterfill(&v, params.subchannel_bandwidth_hz())?;
    let allocation = v.to_allocation(clusters, &wf.q_tilde)?;
    let mut iterations = BTreeMap::new();
    iterations.insert("bisection".to_string(), wf.iterations);
    SolveReport::build(clusters, allocation, params, iterations, wf.status)
}

// ---------------------------------------------------------------------------
// Equal power split
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EqualPowerReason {
    /// `P^max / N` lies outside `[Q^min_n, P^mask_n]`.
    OutsideBox { cluster: usize, share_w: f64, q_min_w: f64, p_mask_w: f64 },
    /// Effective CNRs of clusters `i` and `j` differ; `ratio = H_i / H_j`.
    UnequalEffectiveCnr { i: usize, j: usize, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EqualPowerVerdict {
    Optimal,
    NotOptimal(EqualPowerReason),
    /// Constant terms are too large for the test; `c_ratio` is the observed maximum.
    NotApplicable { c_ratio: f64 },
}

/// Whether splitting `P^max` equally among clusters is optimal (valid when the
/// constant terms `c_n` are negligible).
pub fn equal_power_optimality(
    clusters: &[ClusterSpec],
    params: &SystemParams,
    c_threshold: f64,
) -> Result<EqualPowerVerdict> {
    crate::cluster::validate_system(clusters, params)?;
    if clusters.is_empty() {
        return Ok(EqualPowerVerdict::Optimal);
    }
    let ws = params.subchannel_bandwidth_hz();
    let share = params.p_max_w() / clusters.len() as f64;
    let consts: Vec<ClusterConstants> = clusters.iter().map(|c| ClusterConstants::compute(c, ws)).collect();
    let c_ratio = consts.iter().map(|k| k.c_total.abs() / (k.alpha * share)).fold(0.0, f64::max);
    if !(c_ratio < c_threshold) {
        return Ok(EqualPowerVerdict::NotApplicable { c_ratio });
    }
    for (n, (c, k)) in clusters.iter().zip(&consts).enumerate() {
        let mask = params.mask_for(c);
        if share < k.q_min_w || share > mask {
            return Ok(EqualPowerVerdict::NotOptimal(EqualPowerReason::OutsideBox {
                cluster: n,
                share_w: share,
                q_min_w: k.q_min_w,
                p_mask_w: mask,
            }));
        }
    }
    let h: Vec<f64> = clusters.iter().zip(&consts).map(|(c, k)| k.h_eff(c)).collect();
    for j in 1..h.len() {
        let ratio = h[0] / h[j];
        if (ratio - 1.0).abs() > 1e-6 {
            return Ok(EqualPowerVerdict::NotOptimal(EqualPowerReason::UnequalEffectiveCnr { i: 0, j, ratio }));
        }
    }
    Ok(EqualPowerVerdict::Optimal)
}

// ---------------------------------------------------------------------------
// Mixed fairness
// ---------------------------------------------------------------------------

/// Weighted sum-rate with scaled minimum rates `S^min = Lambda * R^min`.
///
/// `lambda_scale[n][k]` follows each cluster's canonical order and must be 1
/// on the head; `head_weights` are the per-cluster head weights.
pub fn mixed_fairness_solve(
    clusters: &[ClusterSpec],
    params: &SystemParams,
    lambda_scale: &[Vec<f64>],
    head_weights: &[f64],
) -> Result<SolveReport> {
    if lambda_scale.len() != clusters.len() || head_weights.len() != clusters.len() {
        return Err(NomaError::ShapeMismatch("fairness parameters do not match clusters".into()));
    }
    let mut scaled = Vec::with_capacity(clusters.len());
    for (n, (c, lam)) in clusters.iter().zip(lambda_scale).enumerate() {
        if lam.len() != c.len() {
            return Err(NomaError::ShapeMismatch(format!("cluster {n}: {} scales for {} users", lam.len(), c.len())));
        }
        if lam.iter().any(|&l| !(l >= 1.0 && l.is_finite())) {
            return Err(NomaError::InvalidParameter(format!("cluster {n}: rate scales must be >= 1")));
        }
        if lam[c.head()] != 1.0 {
            return Err(NomaError::InvalidParameter(format!("cluster {n}: head rate scale must be 1")));
        }
        let r: Vec<f64> = c.r_min_bps().iter().zip(lam).map(|(r, l)| r * l).collect();
        scaled.push(c.with_r_min(r)?);
    }
    if head_weights.iter().any(|&w| !(w >= 1.0 && w.is_finite())) {
        return Err(NomaError::InvalidParameter("head weights must be >= 1".into()));
    }
    maximize_sum_rate(&scaled, params, Some(head_weights))
}
