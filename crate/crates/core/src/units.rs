//! dB / dBm helpers used at the configuration boundary.

/// dBm to Watts.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm.
pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// A dB ratio as a linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Thermal noise power over `bandwidth_hz` for a density given in dBm/Hz.
pub fn noise_power_w(density_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_w(density_dbm_hz) * bandwidth_hz
}

/// Channel-to-noise ratio in 1/W.
pub fn cnr(gain_linear: f64, noise_w: f64) -> f64 {
    gain_linear / noise_w
}
