//! Brute-force reference solvers for testing `noma-core`.
//!
//! Nothing here calls the solvers under test. Rates are evaluated through
//! [`noma_core::model::rate_bps`]; the intra-cluster split is re-derived in
//! its forward form (weakest user first) and the water-filling used by the
//! EE sweep is a plain arithmetic bisection written from scratch.
//!
//! These routines are exponential or slow by design and are meant for small
//! instances only.

pub mod instances;

use std::collections::BTreeMap;

use noma_core::model::{rate_bps, ClusterSpec, PowerAllocation, SolveReport, SolveStatus, SystemParams};
use noma_core::NomaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no grid point meets the rate demands; refine the grid")]
    NoFeasiblePoint,
    #[error("oracle iteration cap {0} reached")]
    MaxIterations(usize),
    #[error("instance too large for this oracle: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Core(#[from] NomaError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub grid_points: usize,
    /// Initial step of the scaled projected-gradient ascent.
    pub pg_step: f64,
    pub pg_iterations: usize,
    /// Relative objective change at which projected gradient stops.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { grid_points: 2001, pg_step: 1.0, pg_iterations: 200_000, tolerance: 1e-14 }
    }
}

// ---------------------------------------------------------------------------
// Independent intra-cluster algebra
// ---------------------------------------------------------------------------

fn sinr_targets(cluster: &ClusterSpec, ws: f64) -> Vec<f64> {
    cluster.r_min_bps().iter().map(|&r| 2f64.powf(r / ws) - 1.0).collect()
}

/// Forward split: each non-head user takes `b/(1+b)` of what remains plus
/// its own noise term; the head takes the rest.
pub fn forward_split(cluster: &ClusterSpec, q: f64, ws: f64) -> Vec<f64> {
    let b = sinr_targets(cluster, ws);
    let h = cluster.cnr();
    let n = cluster.len();
    let mut p = vec![0.0; n];
    let mut used = 0.0;
    for k in 0..n - 1 {
        p[k] = b[k] / (1.0 + b[k]) * (q - used + 1.0 / h[k]);
        used += p[k];
    }
    p[n - 1] = q - used;
    p
}

/// `(alpha, c)` with head power `alpha q - c`, read off the affine forward split.
pub fn head_affine(cluster: &ClusterSpec, ws: f64) -> (f64, f64) {
    let at0 = forward_split(cluster, 0.0, ws)[cluster.head()];
    let at1 = forward_split(cluster, 1.0, ws)[cluster.head()];
    (at1 - at0, -at0)
}

/// Smallest budget at which the head also reaches its demand.
pub fn forward_q_min(cluster: &ClusterSpec, ws: f64) -> f64 {
    let b = sinr_targets(cluster, ws);
    let head = cluster.head();
    let (alpha, c) = head_affine(cluster, ws);
    (b[head] / cluster.cnr()[head] + c) / alpha
}

fn meets_demands(cluster: &ClusterSpec, p: &[f64], ws: f64, from: usize) -> bool {
    (from..cluster.len()).all(|k| {
        let r = rate_bps(cluster, p, k, ws).unwrap_or(f64::NEG_INFINITY);
        let need = cluster.r_min_bps()[k];
        r >= need * (1.0 - 1e-12)
    })
}

fn cluster_sum_rate(cluster: &ClusterSpec, p: &[f64], ws: f64) -> f64 {
    (0..cluster.len()).map(|k| rate_bps(cluster, p, k, ws).unwrap_or(0.0)).sum()
}

// ---------------------------------------------------------------------------
// Grid searches
// ---------------------------------------------------------------------------

/// Best sum-rate split of `q` over a uniform simplex grid, keeping only
/// points that meet every demand.
pub fn grid_intra_cluster(cluster: &ClusterSpec, q: f64, ws: f64, cfg: &OracleConfig) -> Result<Vec<f64>> {
    let g = cfg.grid_points.max(3);
    let step = q / (g - 1) as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |p: Vec<f64>| {
        if meets_demands(cluster, &p, ws, 0) {
            let s = cluster_sum_rate(cluster, &p, ws);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, p));
            }
        }
    };
    match cluster.len() {
        1 => consider(vec![q]),
        2 => {
            for i in 0..g {
                let p0 = step * i as f64;
                consider(vec![p0, (q - p0).max(0.0)]);
            }
        }
        3 => {
            for i in 0..g {
                for j in 0..g - i {
                    let (p0, p1) = (step * i as f64, step * j as f64);
                    consider(vec![p0, p1, (q - p0 - p1).max(0.0)]);
                }
            }
        }
        n => return Err(OracleError::Unsupported(format!("cluster of {n} users"))),
    }
    best.map(|(_, p)| p).ok_or(OracleError::NoFeasiblePoint)
}

/// Minimum total power over a grid `{0, d, 2d, ...}^K` with `d = upper/(G-1)`.
///
/// The head power is scanned exhaustively. For each head value the weaker
/// users are filled strongest-first with the smallest grid power meeting
/// their demand (found by bisection, since a user's rate only grows with its
/// own power and weaker users never interfere with it). Any other grid point
/// with the same head power is dominated, so the result is the exact grid
/// minimum.
pub fn grid_min_power(cluster: &ClusterSpec, ws: f64, upper: f64, grid_points: usize) -> Result<(Vec<f64>, f64)> {
    let g = grid_points.max(3);
    let d = upper / (g - 1) as f64;
    let n = cluster.len();
    if n > 3 {
        return Err(OracleError::Unsupported(format!("cluster of {n} users")));
    }
    let head = cluster.head();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for ih in 0..g {
        let mut p = vec![0.0; n];
        p[head] = d * ih as f64;
        if !meets_demands(cluster, &p, ws, head) {
            continue;
        }
        let mut ok = true;
        for k in (0..head).rev() {
            let meets = |i: usize, p: &mut Vec<f64>| {
                p[k] = d * i as f64;
                let r = rate_bps(cluster, p, k, ws).unwrap();
                r >= cluster.r_min_bps()[k] * (1.0 - 1e-12)
            };
            if !meets(g - 1, &mut p) {
                ok = false;
                break;
            }
            let (mut lo, mut hi) = (0usize, g - 1);
            if meets(0, &mut p) {
                hi = 0;
            } else {
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if meets(mid, &mut p) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            p[k] = d * hi as f64;
        }
        if ok {
            let total: f64 = p.iter().sum();
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, p));
            }
        }
    }
    best.map(|(t, p)| (p, t)).ok_or(OracleError::NoFeasiblePoint)
}

// ---------------------------------------------------------------------------
// Projected gradient on the cluster budgets
// ---------------------------------------------------------------------------

struct BudgetModel<'a> {
    clusters: &'a [ClusterSpec],
    ws: f64,
    alpha: Vec<f64>,
    c: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    total: f64,
}

impl<'a> BudgetModel<'a> {
    fn new(clusters: &'a [ClusterSpec], params: &SystemParams) -> Result<Self> {
        let ws = params.subchannel_bandwidth_hz();
        let mut m = BudgetModel { clusters, ws, alpha: vec![], c: vec![], lo: vec![], hi: vec![], total: params.p_max_w() };
        for cl in clusters {
            let (a, c) = head_affine(cl, ws);
            m.alpha.push(a);
            m.c.push(c);
            m.lo.push(forward_q_min(cl, ws));
            m.hi.push(params.mask_for(cl));
        }
        let sum_lo: f64 = m.lo.iter().sum();
        if m.lo.iter().zip(&m.hi).any(|(l, h)| l > h) || sum_lo > m.total {
            return Err(OracleError::NoFeasiblePoint);
        }
        Ok(m)
    }

    fn powers(&self, q: &[f64]) -> Vec<Vec<f64>> {
        self.clusters
            .iter()
            .zip(q)
            .map(|(c, &q)| {
                let mut p = forward_split(c, q, self.ws);
                let h = c.head();
                p[h] = p[h].max(0.0);
                p
            })
            .collect()
    }

    fn objective(&self, q: &[f64]) -> f64 {
        self.clusters.iter().zip(self.powers(q)).map(|(c, p)| cluster_sum_rate(c, &p, self.ws)).sum()
    }

    fn head_cnr(&self, n: usize) -> f64 {
        self.clusters[n].cnr()[self.clusters[n].head()]
    }

    fn gradient_and_curvature(&self, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ln2 = std::f64::consts::LN_2;
        let mut g = Vec::with_capacity(q.len());
        let mut k = Vec::with_capacity(q.len());
        for n in 0..q.len() {
            let h = self.head_cnr(n);
            let sinr = ((self.alpha[n] * q[n] - self.c[n]) * h).max(0.0);
            let d = self.alpha[n] * h / (1.0 + sinr);
            g.push(self.ws * d / ln2);
            k.push(self.ws * d * d / ln2);
        }
        (g, k)
    }

    /// Projection onto the boxes and `sum q <= total` in the metric `diag(1/scale)`.
    fn project(&self, y: &[f64], scale: &[f64]) -> Vec<f64> {
        let at = |tau: f64| -> Vec<f64> {
            y.iter().enumerate().map(|(n, &v)| (v - tau * scale[n]).clamp(self.lo[n], self.hi[n])).collect()
        };
        let sum = |q: &[f64]| q.iter().sum::<f64>();
        let q0 = at(0.0);
        if sum(&q0) <= self.total {
            return q0;
        }
        let (mut a, mut b) = (0.0, 1.0);
        while sum(&at(b)) > self.total {
            b *= 2.0;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if sum(&at(m)) > self.total {
                a = m;
            } else {
                b = m;
            }
        }
        at(b)
    }
}

/// Sum-rate optimum by diagonally scaled projected-gradient ascent on the
/// cluster budgets, using the forward intra-cluster split.
pub fn projected_gradient_sum_rate(clusters: &[ClusterSpec], params: &SystemParams, cfg: &OracleConfig) -> Result<SolveReport> {
    if clusters.len() > 3 || clusters.iter().any(|c| c.len() > 3) {
        return Err(OracleError::Unsupported("projected gradient expects N <= 3 and clusters of <= 3 users".into()));
    }
    let m = BudgetModel::new(clusters, params)?;
    let sum_lo: f64 = m.lo.iter().sum();
    let widths: f64 = m.lo.iter().zip(&m.hi).map(|(l, h)| h - l).sum();
    let room = (m.total.min(m.hi.iter().sum()) - sum_lo).max(0.0);
    let mut q: Vec<f64> = m
        .lo
        .iter()
        .zip(&m.hi)
        .map(|(l, h)| if widths > 0.0 { l + room * (h - l) / widths } else { *l })
        .collect();
    let mut f = m.objective(&q);
    let mut iters = 0;
    let mut quiet = 0;
    while iters < cfg.pg_iterations {
        iters += 1;
        let (g, k) = m.gradient_and_curvature(&q);
        let scale: Vec<f64> = k.iter().map(|k| 1.0 / k.max(1e-300)).collect();
        let mut s = cfg.pg_step;
        let mut moved = false;
        for _ in 0..60 {
            let y: Vec<f64> = q.iter().zip(&g).zip(&scale).map(|((q, g), d)| q + s * d * g).collect();
            let qn = m.project(&y, &scale);
            let gain: f64 = g.iter().zip(qn.iter().zip(&q)).map(|(g, (a, b))| g * (a - b)).sum();
            let fn_ = m.objective(&qn);
            if fn_ >= f + 1e-4 * gain {
                let improvement = fn_ - f;
                q = qn;
                moved = improvement > cfg.tolerance * f.abs().max(1e-300);
                f = fn_;
                break;
            }
            s *= 0.5;
        }
        quiet = if moved { 0 } else { quiet + 1 };
        if quiet >= 3 {
            break;
        }
    }
    if iters >= cfg.pg_iterations {
        return Err(OracleError::MaxIterations(cfg.pg_iterations));
    }
    let allocation = PowerAllocation::from_powers(m.powers(&q));
    let mut it = BTreeMap::new();
    it.insert("projected_gradient".to_string(), iters);
    Ok(SolveReport::build(clusters, allocation, params, it, SolveStatus::Optimal)?)
}

// ---------------------------------------------------------------------------
// Exhaustive EE sweep
// ---------------------------------------------------------------------------

/// Water-filling at an exact total `budget` by arithmetic bisection on the level.
fn reference_waterfill(m: &BudgetModel<'_>, budget: f64) -> Vec<f64> {
    let n = m.lo.len();
    let h: Vec<f64> = (0..n).map(|i| m.alpha[i] * m.head_cnr(i)).collect();
    let shift: Vec<f64> = (0..n).map(|i| m.c[i] / m.alpha[i]).collect();
    let at = |level: f64| -> Vec<f64> {
        (0..n).map(|i| (level - 1.0 / h[i] + shift[i]).clamp(m.lo[i], m.hi[i])).collect()
    };
    let (mut a, mut b) = (0.0, budget + h.iter().map(|x| 1.0 / x).fold(0.0, f64::max));
    for _ in 0..300 {
        let mid = 0.5 * (a + b);
        if at(mid).iter().sum::<f64>() > budget {
            b = mid;
        } else {
            a = mid;
        }
    }
    at(0.5 * (a + b))
}

/// EE optimum by sweeping the total transmit power over a uniform grid,
/// water-filling at each point.
pub fn ee_exhaustive(clusters: &[ClusterSpec], params: &SystemParams, cfg: &OracleConfig) -> Result<SolveReport> {
    if clusters.len() > 2 {
        return Err(OracleError::Unsupported("the EE sweep expects N <= 2".into()));
    }
    let m = BudgetModel::new(clusters, params)?;
    let lo: f64 = m.lo.iter().sum();
    let hi = m.total.min(m.hi.iter().sum());
    let g = cfg.grid_points.max(3);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..g {
        let p = if hi > lo { lo + (hi - lo) * i as f64 / (g - 1) as f64 } else { lo };
        let q = reference_waterfill(&m, p);
        let rate = m.objective(&q);
        let ee = rate / (q.iter().sum::<f64>() + params.p_circuit_w());
        if best.as_ref().is_none_or(|(b, _)| ee > *b) {
            best = Some((ee, q));
        }
        if hi <= lo {
            break;
        }
    }
    let (_, q) = best.expect("at least one grid point");
    let allocation = PowerAllocation::from_powers(m.powers(&q));
    let mut it = BTreeMap::new();
    it.insert("grid_points".to_string(), g);
    Ok(SolveReport::build(clusters, allocation, params, it, SolveStatus::Optimal)?)
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `||analytic - numeric||_inf / ||analytic||_inf` for a gradient, using
/// central differences with per-coordinate step `rel_step * max(|x_i|, 1e-3)`.
pub fn finite_difference_check(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    rel_step: f64,
) -> f64 {
    let analytic = grad(x);
    let mut numeric = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1e-3);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        numeric.push((fp - fm) / (2.0 * h));
    }
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    inf_norm(&diff) / inf_norm(&analytic).max(f64::MIN_POSITIVE)
}

/// Same measure for a Hessian-vector product, differencing the gradient along `v`.
pub fn hessian_vector_check(
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    hess_vec: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    x: &[f64],
    v: &[f64],
    step: f64,
) -> f64 {
    let analytic = hess_vec(x, v);
    let xp: Vec<f64> = x.iter().zip(v).map(|(x, v)| x + step * v).collect();
    let xm: Vec<f64> = x.iter().zip(v).map(|(x, v)| x - step * v).collect();
    let (gp, gm) = (grad(&xp), grad(&xm));
    let diff: Vec<f64> = analytic.iter().zip(gp.iter().zip(&gm)).map(|(a, (p, m))| a - (p - m) / (2.0 * step)).collect();
    inf_norm(&diff) / inf_norm(&analytic).max(f64::MIN_POSITIVE)
}
