use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, NomaError>;

/// One cluster whose minimum power exceeds its subchannel mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskViolation {
    /// Position of the cluster in the input slice.
    pub cluster: usize,
    pub subchannel_index: usize,
    pub q_min_w: f64,
    pub p_mask_w: f64,
}

/// Why a system fails the minimum-rate feasibility test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub mask_violations: Vec<MaskViolation>,
    pub total_q_min_w: f64,
    pub p_max_w: f64,
    /// `total_q_min_w - p_max_w` when positive, else zero.
    pub budget_shortfall_w: f64,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for v in &self.mask_violations {
            parts.push(format!(
                "cluster {} (subchannel {}) needs {:.6e} W > mask {:.6e} W",
                v.cluster, v.subchannel_index, v.q_min_w, v.p_mask_w
            ));
        }
        if self.budget_shortfall_w > 0.0 {
            parts.push(format!(
                "total minimum power {:.6e} W exceeds budget {:.6e} W by {:.6e} W",
                self.total_q_min_w, self.p_max_w, self.budget_shortfall_w
            ));
        }
        write!(f, "{}", parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NomaError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for cluster of {len} users")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("cluster budget {q} W outside [{lo}, {hi}] W")]
    BudgetOutOfRange { q: f64, lo: f64, hi: f64 },

    #[error("user {user}: minimum rate exceeds maximum rate")]
    InfeasibleBox { user: usize },

    #[error("infeasible system: {0}")]
    Infeasible(InfeasibilityReport),

    #[error("water level could not be bracketed")]
    BracketFailure,

    #[error("{stage}: iteration cap {cap} reached")]
    MaxIterations { stage: &'static str, cap: usize },

    #[error("barrier line search stalled")]
    LineSearchStall,
}
