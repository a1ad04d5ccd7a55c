//! Random feasible instances for property and acceptance tests.

use noma_core::model::{ClusterSpec, SystemParams};
use rand::Rng;

use crate::forward_q_min;

#[derive(Debug, Clone, Copy)]
pub struct InstanceShape {
    pub max_clusters: usize,
    pub max_cluster_size: usize,
    /// CNRs are drawn log-uniformly over `[10^lo, 10^hi]`.
    pub log10_cnr: (f64, f64),
    /// Upper end of the uniform draw for `R_min / W_s`.
    pub max_spectral_efficiency: f64,
    pub p_circuit_w: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self { max_clusters: 4, max_cluster_size: 4, log10_cnr: (-1.0, 5.0), max_spectral_efficiency: 2.0, p_circuit_w: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub clusters: Vec<ClusterSpec>,
    pub params: SystemParams,
}

pub fn random_cluster<R: Rng + ?Sized>(rng: &mut R, index: usize, size: usize, shape: &InstanceShape, ws: f64) -> ClusterSpec {
    let (lo, hi) = shape.log10_cnr;
    let cnr: Vec<f64> = (0..size).map(|_| 10f64.powf(rng.random_range(lo..hi))).collect();
    let r: Vec<f64> = (0..size).map(|_| ws * rng.random_range(0.0..shape.max_spectral_efficiency)).collect();
    let ids = (0..size).map(|k| index * 100 + k).collect();
    ClusterSpec::new(index, ids, cnr, r, None).expect("valid random cluster")
}

/// A feasible instance with `W_s = 1 Hz`. Masks sit between 1.05 and 4 times
/// each cluster's minimum power; the budget is sometimes binding and
/// sometimes slack.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, shape: &InstanceShape) -> Instance {
    let n = rng.random_range(1..=shape.max_clusters);
    let ws = 1.0;
    let mut clusters = Vec::with_capacity(n);
    for i in 0..n {
        let size = rng.random_range(1..=shape.max_cluster_size);
        clusters.push(random_cluster(rng, i, size, shape, ws));
    }
    let q_min: Vec<f64> = clusters.iter().map(|c| forward_q_min(c, ws).max(1e-6)).collect();
    let mask: Vec<f64> = q_min.iter().map(|q| q * rng.random_range(1.05..4.0) + 1e-3).collect();
    let sum_min: f64 = q_min.iter().sum();
    let sum_mask: f64 = mask.iter().sum();
    let p_max = if rng.random_bool(0.8) { sum_min + rng.random_range(0.05..0.95) * (sum_mask - sum_min) } else { sum_mask * 1.5 };
    let max_size = clusters.iter().map(|c| c.len()).max().unwrap();
    let params = SystemParams::new(n as f64 * ws, n, p_max, mask, shape.p_circuit_w, max_size).expect("valid params");
    Instance { clusters, params }
}
