//! Single-cell downlink channel draws.
//!
//! Users are uniform in area over an annulus around the base station. Each
//! gain combines distance path loss, log-normal shadowing and unit-mean
//! Rayleigh fading, and is flat across subchannels.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::units::{db_to_linear, noise_power_w};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    pub shadowing_sigma_db: f64,
    pub noise_density_dbm_hz: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self { cell_radius_m: 500.0, min_distance_m: 20.0, shadowing_sigma_db: 8.0, noise_density_dbm_hz: -174.0 }
    }
}

/// `128.1 + 37.6 log10(d / 1 km)` in dB.
pub fn path_loss_db(distance_m: f64) -> f64 {
    128.1 + 37.6 * (distance_m / 1000.0).log10()
}

/// Linear channel power gain from its components.
pub fn channel_gain(distance_m: f64, shadowing_db: f64, fading_power: f64) -> f64 {
    db_to_linear(-path_loss_db(distance_m) + shadowing_db) * fading_power
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Realization {
    pub distance_m: Vec<f64>,
    /// Linear power gain per user (not noise-normalised).
    pub gain: Vec<f64>,
}

impl Realization {
    /// CNR in 1/W on a subchannel of width `ws_hz`.
    pub fn cnr(&self, noise_density_dbm_hz: f64, ws_hz: f64) -> Vec<f64> {
        let noise = noise_power_w(noise_density_dbm_hz, ws_hz);
        self.gain.iter().map(|g| g / noise).collect()
    }
}

/// Draws `n_users` users. Per user the draw order is radius, shadowing, fading.
pub fn generate_realization<R: Rng + ?Sized>(model: &ChannelModel, n_users: usize, rng: &mut R) -> Realization {
    let r0 = model.min_distance_m;
    let r1 = model.cell_radius_m;
    let shadow = Normal::new(0.0, model.shadowing_sigma_db.max(0.0)).expect("finite sigma");
    let mut distance_m = Vec::with_capacity(n_users);
    let mut gain = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let u: f64 = rng.random();
        let d = (u * (r1 * r1 - r0 * r0) + r0 * r0).sqrt();
        let s = shadow.sample(rng);
        let f: f64 = Exp1.sample(rng);
        distance_m.push(d);
        gain.push(channel_gain(d, s, f));
    }
    Realization { distance_m, gain }
}
