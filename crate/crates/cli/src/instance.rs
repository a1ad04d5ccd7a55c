//! TOML description of a single problem instance.

use noma_core::model::{ClusterSpec, SystemParams};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub system: SystemSection,
    #[serde(rename = "cluster", default)]
    pub clusters: Vec<ClusterSection>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Mask {
    Uniform(f64),
    PerSubchannel(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub total_bandwidth_hz: f64,
    pub n_subchannels: usize,
    pub p_max_w: f64,
    /// Defaults to `p_max_w` on every subchannel.
    pub p_mask_w: Option<Mask>,
    #[serde(default)]
    pub p_circuit_w: f64,
    /// Defaults to the largest cluster.
    pub u_max: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub subchannel: usize,
    pub cnr: Vec<f64>,
    pub r_min_bps: Vec<f64>,
    pub r_max_bps: Option<Vec<f64>>,
    /// Defaults to consecutive ids across the file.
    pub user_ids: Option<Vec<usize>>,
}

impl InstanceFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn build(&self) -> anyhow::Result<(Vec<ClusterSpec>, SystemParams)> {
        let mut next_id = 0;
        let mut clusters = Vec::with_capacity(self.clusters.len());
        for c in &self.clusters {
            let ids = match &c.user_ids {
                Some(ids) => ids.clone(),
                None => (next_id..next_id + c.cnr.len()).collect(),
            };
            next_id += c.cnr.len();
            clusters.push(ClusterSpec::new(c.subchannel, ids, c.cnr.clone(), c.r_min_bps.clone(), c.r_max_bps.clone())?);
        }
        let s = &self.system;
        let mask = match &s.p_mask_w {
            None => vec![s.p_max_w; s.n_subchannels],
            Some(Mask::Uniform(m)) => vec![*m; s.n_subchannels],
            Some(Mask::PerSubchannel(v)) => v.clone(),
        };
        let u_max = s.u_max.unwrap_or_else(|| clusters.iter().map(|c| c.len()).max().unwrap_or(1));
        let params = SystemParams::new(s.total_bandwidth_hz, s.n_subchannels, s.p_max_w, mask, s.p_circuit_w, u_max)?;
        Ok((clusters, params))
    }
}
