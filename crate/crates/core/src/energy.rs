//! Energy-efficiency maximisation.
//!
//! EE = (sum-rate) / (transmit power + P_C) is maximised with Dinkelbach's
//! method: for a fixed ratio `lambda` the parametric problem
//! `max f1(q) - lambda f2(q)` is concave in the virtual budgets `q~` and is
//! solved by water-filling when the budget is certainly active, or by one of
//! two iterative inner solvers otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NomaError, Result};
use crate::model::{ClusterSpec, PowerAllocation, SolveReport, SolveStatus, SystemParams, LN_2};
use crate::sumrate::{to_virtual_oma, waterfill, VirtualOmaSystem};

pub const DINKELBACH_MAX_OUTER: usize = 50;
/// Termination when `|F| <= DINKELBACH_REL_TOL * f1`.
pub const DINKELBACH_REL_TOL: f64 = 1e-7;
pub const SUBGRADIENT_MAX_ITERATIONS: usize = 10_000;
pub const BARRIER_GAP: f64 = 1e-8;
pub const BARRIER_MU: f64 = 20.0;
const BARRIER_MAX_NEWTON: usize = 5_000;
const ARMIJO_ALPHA: f64 = 0.25;
const BACKTRACK_BETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerSolver {
    Subgradient,
    Barrier,
}

/// Numerator (bit/s) and denominator (W) of the EE of `allocation`.
pub fn ee_objective_split(
    clusters: &[ClusterSpec],
    allocation: &PowerAllocation,
    params: &SystemParams,
) -> Result<(f64, f64)> {
    let o = crate::model::system_objectives(clusters, allocation, params)?;
    Ok((o.sum_rate_bps, o.consumed_power_w))
}

/// Sufficient condition for the total budget to be active at ratio `lambda`:
/// every cluster's unconstrained EE-optimal virtual budget exceeds its mask.
pub fn full_power_condition(v: &VirtualOmaSystem, ws_hz: f64, lambda: f64) -> bool {
    if lambda <= 0.0 {
        return true;
    }
    let level = ws_hz / (LN_2 * lambda);
    v.h_eff.iter().zip(&v.p_tilde_mask).all(|(&h, &m)| level - 1.0 / h > m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerResult {
    pub q_tilde: Vec<f64>,
    pub iterations: usize,
}

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

// ---------------------------------------------------------------------------
// Projected subgradient on the budget multiplier
// ---------------------------------------------------------------------------

/// Dual projected-subgradient solver for the parametric inner problem.
///
/// The primal is `q~_n = clamp(W_s/(ln2 (lambda+nu)) - 1/H_n)`. The step on
/// `nu` is a damped Newton step, `ln2 (lambda+nu)^2 / (W_s N_free sqrt(t))`,
/// which keeps it independent of the problem's power and CNR scale. Where no
/// channel is free the dual is flat and `nu` jumps to the next breakpoint.
pub fn subgradient_inner(v: &VirtualOmaSystem, lambda: f64, ws_hz: f64) -> Result<InnerResult> {
    let n = v.len();
    let budget = v.p_tilde_max;
    let lo = &v.q_tilde_min;
    let hi = &v.p_tilde_mask;
    let sum_lo: f64 = lo.iter().sum();
    if n == 0 || budget <= sum_lo * (1.0 + 1e-12) {
        return Ok(InnerResult { q_tilde: lo.clone(), iterations: 0 });
    }
    let sum_hi: f64 = hi.iter().sum();
    if lambda <= 0.0 && sum_hi <= budget {
        return Ok(InnerResult { q_tilde: hi.clone(), iterations: 0 });
    }
    let a = ws_hz / LN_2;
    let max_inv_h = v.h_eff.iter().map(|h| 1.0 / h).fold(0.0, f64::max);
    // For lambda = 0 the optimal nu is at least the level that puts P~max on one channel.
    let nu_floor = if lambda > 0.0 { 0.0 } else { a / (budget + max_inv_h) };

    let primal = |nu: f64| -> (Vec<f64>, usize) {
        let level = a / (lambda + nu);
        let mut free = 0;
        let q = (0..n)
            .map(|i| {
                let x = level - 1.0 / v.h_eff[i];
                // Channels on a bound count as free, with slack for the rounding of a breakpoint jump.
                let tol = 1e-12 * level;
                if x >= lo[i] - tol && x <= hi[i] + tol {
                    free += 1;
                }
                clamp(x, lo[i], hi[i])
            })
            .collect();
        (q, free)
    };

    // Multiplier at which the nearest clamped channel comes off its bound,
    // searching in the direction that reduces |slack|.
    let breakpoint = |nu: f64, slack: f64| -> f64 {
        let level = a / (lambda + nu);
        let target = if slack < 0.0 {
            (0..n).map(|i| hi[i] + 1.0 / v.h_eff[i]).filter(|&l| l < level).fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.max(l))))
        } else {
            (0..n).map(|i| lo[i] + 1.0 / v.h_eff[i]).filter(|&l| l > level).fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))))
        };
        match target {
            Some(l) => (a / l - lambda).max(nu_floor),
            None => nu_floor,
        }
    };

    let mut nu = nu_floor;
    let (mut q, mut free) = primal(nu);
    for t in 1..=SUBGRADIENT_MAX_ITERATIONS {
        let slack = budget - q.iter().sum::<f64>();
        let nu_next = if free == 0 && slack != 0.0 {
            // Flat stretch of the dual: move straight to the next breakpoint.
            breakpoint(nu, slack)
        } else {
            let step = LN_2 * (lambda + nu).powi(2) / (ws_hz * free.max(1) as f64 * (t as f64).sqrt());
            (nu - step * slack).max(nu_floor)
        };
        let (q_next, free_next) = primal(nu_next);
        let change = q.iter().zip(&q_next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = q_next.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let slack_next = budget - q_next.iter().sum::<f64>();
        nu = nu_next;
        q = q_next;
        free = free_next;
        let primal_ok = change <= 1e-9 * scale && slack_next >= -1e-9 * budget;
        // complementary slackness, measured relative to the total multiplier
        let cs_ok = nu * slack_next <= 1e-6 * budget * (lambda + nu).max(f64::MIN_POSITIVE);
        if primal_ok && cs_ok {
            return Ok(InnerResult { q_tilde: q, iterations: t });
        }
    }
    Err(NomaError::MaxIterations { stage: "subgradient", cap: SUBGRADIENT_MAX_ITERATIONS })
}

// ---------------------------------------------------------------------------
// Log-barrier with Newton centering
// ---------------------------------------------------------------------------

/// Barrier-augmented inner objective over the free coordinates.
///
/// `U(x) = t f0(x) + phi(x)` with
/// `f0 = sum(-log2(1 + x_n h_n) + lambda_norm x_n)` (rates in bit/s/Hz) and
/// `phi = -ln(budget - sum x) - sum ln(x - lo) - sum ln(hi - x)`,
/// the last sum only over finite `hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierObjective {
    pub h: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub budget: f64,
    /// `lambda / W_s`.
    pub lambda_norm: f64,
    pub t: f64,
}

impl BarrierObjective {
    /// Number of logarithmic barrier terms.
    pub fn n_constraints(&self) -> usize {
        1 + self.lo.len() + self.hi.iter().filter(|h| h.is_finite()).count()
    }

    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        let inside = x.iter().zip(&self.lo).zip(&self.hi).all(|((&x, &l), &h)| x > l && x < h);
        inside && x.iter().sum::<f64>() < self.budget
    }

    pub fn f0(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.h).map(|(&x, &h)| -(x * h).ln_1p() / LN_2 + self.lambda_norm * x).sum()
    }

    pub fn f0_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.h).map(|(&x, &h)| -h / (LN_2 * (1.0 + x * h)) + self.lambda_norm).collect()
    }

    /// `None` outside the strict interior.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        if !self.is_strictly_feasible(x) {
            return None;
        }
        let mut phi = -(self.budget - x.iter().sum::<f64>()).ln();
        for i in 0..x.len() {
            phi -= (x[i] - self.lo[i]).ln();
            if self.hi[i].is_finite() {
                phi -= (self.hi[i] - x[i]).ln();
            }
        }
        Some(self.t * self.f0(x) + phi)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let inv_sb = 1.0 / (self.budget - x.iter().sum::<f64>());
        let g0 = self.f0_gradient(x);
        (0..x.len())
            .map(|i| {
                let mut g = self.t * g0[i] + inv_sb - 1.0 / (x[i] - self.lo[i]);
                if self.hi[i].is_finite() {
                    g += 1.0 / (self.hi[i] - x[i]);
                }
                g
            })
            .collect()
    }

    /// Diagonal part of the Hessian; the full Hessian adds `11^T / s_b^2`.
    fn hessian_diag(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let h = self.h[i];
                let d = 1.0 + x[i] * h;
                let mut v = self.t * h * h / (LN_2 * d * d) + (x[i] - self.lo[i]).powi(-2);
                if self.hi[i].is_finite() {
                    v += (self.hi[i] - x[i]).powi(-2);
                }
                v
            })
            .collect()
    }

    pub fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.hessian_diag(x);
        let sb = self.budget - x.iter().sum::<f64>();
        let rank1 = v.iter().sum::<f64>() / (sb * sb);
        d.iter().zip(v).map(|(d, v)| d * v + rank1).collect()
    }

    /// Solves `(D + u u^T) dx = -g` with `u = 1/s_b` (Sherman-Morrison).
    pub fn newton_step(&self, x: &[f64]) -> Vec<f64> {
        let g = self.gradient(x);
        let d = self.hessian_diag(x);
        let sb = self.budget - x.iter().sum::<f64>();
        let u = 1.0 / sb;
        let dinv_g: Vec<f64> = g.iter().zip(&d).map(|(g, d)| g / d).collect();
        let dinv_u_sum: f64 = d.iter().map(|d| u / d).sum();
        let coef = u * dinv_g.iter().sum::<f64>() / (1.0 + u * dinv_u_sum);
        dinv_g.iter().zip(&d).map(|(dg, d)| -(dg - coef * u / d)).collect()
    }
}

/// Interior-point solver for the parametric inner problem.
pub fn barrier_inner(v: &VirtualOmaSystem, lambda: f64, ws_hz: f64) -> Result<InnerResult> {
    let n = v.len();
    let lo = &v.q_tilde_min;
    let hi = &v.p_tilde_mask;
    let mut q = lo.clone();
    let free: Vec<usize> = (0..n)
        .filter(|&i| hi[i] - lo[i] > 1e-12 * hi[i].min(v.p_tilde_max).max(f64::MIN_POSITIVE))
        .collect();
    for i in 0..n {
        if !free.contains(&i) {
            q[i] = lo[i];
        }
    }
    let fixed_sum: f64 = (0..n).filter(|i| !free.contains(i)).map(|i| q[i]).sum();
    let budget = v.p_tilde_max - fixed_sum;
    let lo_f: Vec<f64> = free.iter().map(|&i| lo[i]).collect();
    let hi_f: Vec<f64> = free.iter().map(|&i| hi[i]).collect();
    let residual = budget - lo_f.iter().sum::<f64>();
    if free.is_empty() || residual <= 1e-12 * v.p_tilde_max.max(f64::MIN_POSITIVE) {
        return Ok(InnerResult { q_tilde: q, iterations: 0 });
    }
    let nf = free.len() as f64;
    let mut x: Vec<f64> = lo_f
        .iter()
        .zip(&hi_f)
        .map(|(&l, &h)| l + 0.9 * (h - l).min(residual / nf))
        .collect();

    let mut obj = BarrierObjective {
        h: free.iter().map(|&i| v.h_eff[i]).collect(),
        lo: lo_f,
        hi: hi_f,
        budget,
        lambda_norm: lambda / ws_hz,
        t: 1.0,
    };
    let m = obj.n_constraints() as f64;
    let gap0: f64 = obj
        .f0_gradient(&x)
        .iter()
        .zip(obj.lo.iter().zip(&obj.hi))
        .map(|(g, (l, h))| g.abs() * (h - l).min(residual))
        .sum();
    obj.t = if gap0 > 0.0 && gap0.is_finite() { m / gap0 } else { 1.0 };

    let mut newton_total = 0;
    loop {
        // centering
        loop {
            newton_total += 1;
            if newton_total > BARRIER_MAX_NEWTON {
                return Err(NomaError::MaxIterations { stage: "barrier", cap: BARRIER_MAX_NEWTON });
            }
            let g = obj.gradient(&x);
            let dx = obj.newton_step(&x);
            let slope: f64 = g.iter().zip(&dx).map(|(g, d)| g * d).sum();
            let u0 = obj.value(&x).expect("iterate stays strictly feasible");
            if -slope / 2.0 <= (64.0 * f64::EPSILON * u0.abs()).max(1e-12) {
                break;
            }
            let mut s = 1.0;
            let trial = |s: f64| x.iter().zip(&dx).map(|(x, d)| x + s * d).collect::<Vec<f64>>();
            while !obj.is_strictly_feasible(&trial(s)) {
                s *= BACKTRACK_BETA;
            }
            let noise = 16.0 * f64::EPSILON * u0.abs();
            let mut accepted = None;
            while s > 1e-20 {
                let xt = trial(s);
                // A step that rounds back onto x is no progress, even if it passes Armijo.
                if xt == x {
                    break;
                }
                if let Some(u) = obj.value(&xt) {
                    if u <= u0 + ARMIJO_ALPHA * s * slope + noise {
                        accepted = Some(xt);
                        break;
                    }
                }
                s *= BACKTRACK_BETA;
            }
            match accepted {
                Some(xt) => x = xt,
                // At the rounding floor: treat as centred unless far from it.
                None if -slope / 2.0 <= 1e-6 * (1.0 + u0.abs()) => break,
                None => return Err(NomaError::LineSearchStall),
            }
        }
        if m / obj.t <= BARRIER_GAP {
            break;
        }
        obj.t *= BARRIER_MU;
    }
    for (j, &i) in free.iter().enumerate() {
        q[i] = x[j];
    }
    Ok(InnerResult { q_tilde: q, iterations: newton_total })
}

// ---------------------------------------------------------------------------
// Dinkelbach
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DinkelbachState {
    /// Final ratio; equals the EE of the returned allocation.
    pub lambda: f64,
    /// `F(lambda, q*)` of the last iteration.
    pub f_value: f64,
    pub iteration: usize,
    /// `(lambda, F(lambda, q*(lambda)))` per outer iteration.
    pub history: Vec<(f64, f64)>,
    /// Whether the last inner solve used water-filling.
    pub full_power_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EeSolution {
    pub report: SolveReport,
    pub state: DinkelbachState,
}

/// Maximises energy efficiency subject to all minimum-rate and power constraints.
///
/// Starts from the EE of the minimum-power allocation.
pub fn dinkelbach_solve(clusters: &[ClusterSpec], params: &SystemParams, inner: InnerSolver) -> Result<EeSolution> {
    let v = to_virtual_oma(clusters, params)?;
    let ws = params.subchannel_bandwidth_hz();
    let pinned_rate: f64 = clusters.iter().map(|c| c.r_min_bps()[..c.head()].iter().sum::<f64>()).sum();
    let fixed_power = params.p_circuit_w() + v.shift.iter().sum::<f64>();
    let f1 = |q: &[f64]| pinned_rate + v.head_sum_rate(q, ws);
    let f2 = |q: &[f64]| q.iter().sum::<f64>() + fixed_power;
    let ratio = |q: &[f64]| {
        let d = f2(q);
        if d > 0.0 { f1(q) / d } else { 0.0 }
    };

    let mut q = v.q_tilde_min.clone();
    let mut lambda = ratio(&q);
    let mut history = Vec::new();
    let (mut inner_iters, mut wf_calls) = (0, 0);
    let mut full_power_used = false;
    let mut converged = false;
    let mut f_value = 0.0;
    for _ in 0..DINKELBACH_MAX_OUTER {
        full_power_used = full_power_condition(&v, ws, lambda);
        let q_new = if full_power_used {
            wf_calls += 1;
            let wf = waterfill(&v, ws)?;
            inner_iters += wf.iterations;
            wf.q_tilde
        } else {
            let r = match inner {
                InnerSolver::Subgradient => subgradient_inner(&v, lambda, ws)?,
                InnerSolver::Barrier => barrier_inner(&v, lambda, ws)?,
            };
            inner_iters += r.iterations;
            r.q_tilde
        };
        let num = f1(&q_new);
        f_value = num - lambda * f2(&q_new);
        history.push((lambda, f_value));
        q = q_new;
        if f_value.abs() <= DINKELBACH_REL_TOL * num {
            converged = true;
            break;
        }
        lambda = ratio(&q);
    }
    if !converged {
        return Err(NomaError::MaxIterations { stage: "dinkelbach", cap: DINKELBACH_MAX_OUTER });
    }
    let outer = history.len();
    let allocation = v.to_allocation(clusters, &q)?;
    let mut iterations = BTreeMap::new();
    iterations.insert("dinkelbach_outer".to_string(), outer);
    iterations.insert("inner".to_string(), inner_iters);
    iterations.insert("waterfill_calls".to_string(), wf_calls);
    let report = SolveReport::build(clusters, allocation, params, iterations, SolveStatus::Optimal)?;
    let state = DinkelbachState { lambda: ratio(&q), f_value, iteration: outer, history, full_power_used };
    Ok(EeSolution { report, state })
}
