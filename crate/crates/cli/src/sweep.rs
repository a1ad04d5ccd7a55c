use std::io::Write;

use noma_core::sim::MetricsRow;

pub const CSV_HEADER: [&str; 8] =
    ["scheme", "K", "r_min_bps", "outage", "avg_min_power_w", "avg_sum_rate_bps", "avg_ee", "n_feasible"];

/// Writes the rows with the fixed header. Floats use the shortest
/// round-trip representation, so output is byte-stable.
pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            r.n_users.to_string(),
            r.r_min_bps.to_string(),
            r.outage_probability.to_string(),
            r.avg_min_power_w.to_string(),
            r.avg_sum_rate_bps.to_string(),
            r.avg_ee.to_string(),
            r.n_feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
