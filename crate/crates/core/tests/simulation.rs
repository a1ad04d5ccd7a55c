use noma_core::sim::monte_carlo::{evaluate_scheme, realization_rng};
use noma_core::sim::{generate_realization, run_monte_carlo, ScenarioConfig, Scheme};

fn small(k: usize, r: f64, n: usize) -> ScenarioConfig {
    ScenarioConfig {
        n_users: vec![k],
        r_min_bps: vec![r],
        schemes: vec![Scheme::ScNoma, Scheme::FdNoma(6), Scheme::FdNoma(3), Scheme::FdNoma(2), Scheme::Fdma],
        n_realizations: n,
        rng_seed: 42,
        ..Default::default()
    }
}

#[test]
fn capacity_and_min_power_nesting_per_realization() {
    // U divides K so that the FD-NOMA clusters refine one another.
    let cfg = small(12, 1e6, 60);
    let mut compared = 0;
    for i in 0..cfg.n_realizations as u64 {
        let real = generate_realization(&cfg.channel, 12, &mut realization_rng(cfg.rng_seed, 12, i));
        let out: Vec<_> = cfg.schemes.iter().map(|&s| evaluate_scheme(&cfg, s, &real, 1e6).unwrap()).collect();
        // Chains along which the partition refines: SC ⊇ 6 ⊇ 3 ⊇ FDMA, SC ⊇ 6 ⊇ 2 ⊇ FDMA.
        for chain in [[0, 1, 2, 4], [0, 1, 3, 4]] {
            for w in chain.windows(2) {
                let (a, b) = (&out[w[0]], &out[w[1]]);
                if a.feasible && b.feasible {
                    compared += 1;
                    let tol = 1e-9 * a.sum_rate_bps.max(b.sum_rate_bps);
                    assert!(a.sum_rate_bps >= b.sum_rate_bps - tol, "realization {i}: {:?} vs {:?}", a, b);
                    assert!(a.min_power_w <= b.min_power_w * (1.0 + 1e-9), "realization {i}: {:?} vs {:?}", a, b);
                }
                if b.feasible {
                    assert!(a.feasible, "realization {i}: coarser scheme infeasible");
                }
            }
        }
    }
    assert!(compared > 0);
}

#[test]
fn worker_count_does_not_change_metrics() {
    let cfg = small(8, 5e5, 40);
    let serial = run_monte_carlo(&cfg, Some(1)).unwrap();
    let parallel = run_monte_carlo(&cfg, Some(8)).unwrap();
    let again = run_monte_carlo(&cfg, Some(3)).unwrap();
    assert_eq!(format!("{serial:?}"), format!("{parallel:?}"));
    assert_eq!(format!("{serial:?}"), format!("{again:?}"));
}

#[test]
fn metrics_are_well_formed() {
    let mut cfg = small(6, 2e6, 30);
    cfg.r_min_bps = vec![5e5, 2e6];
    cfg.n_users = vec![4, 6];
    let rows = run_monte_carlo(&cfg, None).unwrap();
    assert_eq!(rows.len(), 2 * 2 * cfg.schemes.len());
    for row in &rows {
        assert!((0.0..=1.0).contains(&row.outage_probability));
        assert_eq!(
            row.n_feasible,
            ((1.0 - row.outage_probability) * cfg.n_realizations as f64).round() as usize
        );
        assert!(row.avg_sum_rate_bps >= 0.0 && row.avg_ee >= 0.0);
        if row.n_feasible == 0 {
            assert!(row.avg_min_power_w.is_nan());
        }
    }
    assert_eq!(rows[0].n_users, 4);
    assert_eq!(rows[0].scheme, Scheme::ScNoma);
    assert_eq!(rows[cfg.schemes.len()].r_min_bps, 2e6);
}

#[test]
fn rejects_zero_realizations() {
    let cfg = ScenarioConfig { n_realizations: 0, ..Default::default() };
    assert!(run_monte_carlo(&cfg, Some(1)).is_err());
}
