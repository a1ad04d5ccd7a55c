use noma_core::cluster::{beta_from_rate, intra_cluster_optimal, min_power_allocation};
use noma_core::energy::{dinkelbach_solve, BarrierObjective, InnerSolver};
use noma_core::model::{rate_bps, ClusterSpec, SystemParams};
use noma_core::sumrate::{maximize_sum_rate, to_virtual_oma, waterfill};
use noma_oracle::instances::{random_cluster, random_instance, InstanceShape};
use noma_oracle::{
    ee_exhaustive, finite_difference_check, grid_intra_cluster, grid_min_power, hessian_vector_check,
    projected_gradient_sum_rate, OracleConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn non_head_rates_are_pinned_on_random_instances() {
    let mut r = rng(11);
    let shape = InstanceShape::default();
    for case in 0..1000 {
        let inst = random_instance(&mut r, &shape);
        let rep = maximize_sum_rate(&inst.clusters, &inst.params, None).unwrap();
        for (n, c) in inst.clusters.iter().enumerate() {
            for k in 0..c.head() {
                let want = c.r_min_bps()[k];
                let got = rep.rates_bps[n][k];
                assert!(
                    (got - want).abs() <= 1e-9 * want.max(1e-300) || (want == 0.0 && got.abs() < 1e-12),
                    "case {case}: cluster {n} user {k}: rate {got} vs demand {want}"
                );
            }
        }
    }
}

#[test]
fn sum_rate_matches_projected_gradient() {
    let mut r = rng(12);
    let shape = InstanceShape { max_clusters: 3, max_cluster_size: 3, ..Default::default() };
    let cfg = OracleConfig::default();
    for case in 0..200 {
        let inst = random_instance(&mut r, &shape);
        let ours = maximize_sum_rate(&inst.clusters, &inst.params, None).unwrap();
        let oracle = projected_gradient_sum_rate(&inst.clusters, &inst.params, &cfg).unwrap();
        assert!(
            rel(ours.sum_rate_bps, oracle.sum_rate_bps) <= 1e-5,
            "case {case}: {} vs {}",
            ours.sum_rate_bps,
            oracle.sum_rate_bps
        );
    }
}

#[test]
fn min_power_is_not_beaten_by_grid_search() {
    let mut r = rng(13);
    let shape = InstanceShape { log10_cnr: (-1.0, 3.0), ..Default::default() };
    for case in 0..200 {
        let size = r.random_range(1..=3);
        let c = random_cluster(&mut r, 0, size, &shape, 1.0);
        let (_, q_min) = min_power_allocation(&c, 1.0);
        let upper = 1.5 * q_min.max(1e-6);
        let g = 2001;
        let (_, grid) = grid_min_power(&c, 1.0, upper, g).unwrap();
        let d = upper / (g - 1) as f64;
        let amplification: f64 = c.r_min_bps().iter().map(|&x| 1.0 + beta_from_rate(x, 1.0)).product();
        assert!(q_min <= grid * (1.0 + 1e-9) + 1e-15, "case {case}: recursion {q_min} above grid {grid}");
        assert!(
            grid - q_min <= size as f64 * d * amplification,
            "case {case}: grid {grid} too far above recursion {q_min}"
        );
    }
}

#[test]
fn printed_closed_form_disagrees_with_recursion() {
    // Singleton: the recursion gives beta/h, the printed product form beta (1 + 1/h).
    let c = ClusterSpec::simple(0, vec![4.0], vec![1.0]).unwrap();
    let beta = beta_from_rate(1.0, 1.0);
    let (_, recursion) = min_power_allocation(&c, 1.0);
    let printed = beta * (1.0 + 1.0 / 4.0);
    let (_, grid) = grid_min_power(&c, 1.0, 2.0, 2001).unwrap();
    assert!(rel(recursion, beta / 4.0) < 1e-15);
    assert!((grid - recursion).abs() <= 1e-3);
    assert!((grid - printed).abs() > 0.5);
}

#[test]
fn intra_cluster_split_matches_grid() {
    let c = ClusterSpec::simple(0, vec![1.0, 4.0], vec![1.0, 0.0]).unwrap();
    let ours = intra_cluster_optimal(&c, 2.0, 10.0, 1.0).unwrap();
    let grid = grid_intra_cluster(&c, 2.0, 1.0, &OracleConfig::default()).unwrap();
    let step = 2.0 / 2000.0;
    for k in 0..2 {
        assert!((ours[k] - grid[k]).abs() <= step, "{ours:?} vs {grid:?}");
    }

    let mut r = rng(14);
    let shape = InstanceShape { log10_cnr: (-1.0, 2.0), max_spectral_efficiency: 1.0, ..Default::default() };
    let cfg = OracleConfig { grid_points: 401, ..Default::default() };
    for _ in 0..20 {
        let c = random_cluster(&mut r, 0, 3, &shape, 1.0);
        let (_, q_min) = min_power_allocation(&c, 1.0);
        let q = 2.0 * q_min + 0.5;
        let ours = intra_cluster_optimal(&c, q, f64::INFINITY, 1.0).unwrap();
        let sum = |p: &[f64]| (0..3).map(|k| rate_bps(&c, p, k, 1.0).unwrap()).sum::<f64>();
        let grid = grid_intra_cluster(&c, q, 1.0, &cfg).unwrap();
        assert!(sum(&ours) >= sum(&grid) * (1.0 - 1e-12));
    }
}

#[test]
fn bisection_converges_within_sixty_iterations() {
    let mut r = rng(15);
    let shape = InstanceShape::default();
    let mut worst = 0;
    for case in 0..1000 {
        let inst = random_instance(&mut r, &shape);
        let v = to_virtual_oma(&inst.clusters, &inst.params).unwrap();
        let wf = waterfill(&v, inst.params.subchannel_bandwidth_hz()).unwrap();
        assert!(wf.relative_residual <= 1e-8, "case {case}: residual {}", wf.relative_residual);
        worst = worst.max(wf.iterations);
    }
    assert!(worst <= 60, "worst iteration count {worst}");
}

fn scalar(p_max: f64) -> (Vec<ClusterSpec>, SystemParams) {
    let c = ClusterSpec::simple(0, vec![1.0], vec![0.0]).unwrap();
    (vec![c], SystemParams::with_uniform_mask(1.0, 1, p_max, p_max, 1.0, 1).unwrap())
}

#[test]
fn scalar_instance_recovers_e_minus_one() {
    let (c, p) = scalar(10.0);
    for inner in [InnerSolver::Subgradient, InnerSolver::Barrier] {
        let s = dinkelbach_solve(&c, &p, inner).unwrap();
        let q = s.report.allocation.powers_w[0][0];
        assert!((q - (std::f64::consts::E - 1.0)).abs() <= 1e-6, "{inner:?}: {q}");
    }
    let oracle = ee_exhaustive(&c, &p, &OracleConfig::default()).unwrap();
    let step = 10.0 / 2000.0;
    assert!((oracle.allocation.powers_w[0][0] - (std::f64::consts::E - 1.0)).abs() <= step);
}

#[test]
fn dinkelbach_random_instances() {
    let mut r = rng(16);
    let shape = InstanceShape::default();
    for case in 0..300 {
        let inst = random_instance(&mut r, &shape);
        let sub = dinkelbach_solve(&inst.clusters, &inst.params, InnerSolver::Subgradient).unwrap();
        let bar = dinkelbach_solve(&inst.clusters, &inst.params, InnerSolver::Barrier).unwrap();
        assert!(sub.state.iteration <= 10, "case {case}: {} outer iterations", sub.state.iteration);
        assert!(bar.state.iteration <= 10, "case {case}: {} outer iterations", bar.state.iteration);
        let (a, b) = (sub.report.ee_bps_per_joule, bar.report.ee_bps_per_joule);
        assert!(rel(a, b) <= 1e-5, "case {case}: subgradient {a} vs barrier {b}");

        let sr = maximize_sum_rate(&inst.clusters, &inst.params, None).unwrap();
        assert!(a >= sr.ee_bps_per_joule * (1.0 - 1e-9), "case {case}: EE below the full-power point");

        // Certificate: F > 0 at every earlier ratio.
        let h = &sub.state.history;
        for &(_, f) in &h[..h.len() - 1] {
            assert!(f > 0.0, "case {case}: history {h:?}");
        }
    }
}

#[test]
fn dinkelbach_matches_exhaustive_sweep() {
    let mut r = rng(17);
    let shape = InstanceShape { max_clusters: 2, max_cluster_size: 3, ..Default::default() };
    let cfg = OracleConfig::default();
    for case in 0..100 {
        let inst = random_instance(&mut r, &shape);
        let ours = dinkelbach_solve(&inst.clusters, &inst.params, InnerSolver::Subgradient).unwrap();
        let oracle = ee_exhaustive(&inst.clusters, &inst.params, &cfg).unwrap();
        let (a, b) = (ours.report.ee_bps_per_joule, oracle.ee_bps_per_joule);
        assert!(a >= b * (1.0 - 1e-9), "case {case}: solver {a} below sweep {b}");

        // One grid step moves EE by at most step * (max marginal rate + EE) / (min power + P_C).
        let v = to_virtual_oma(&inst.clusters, &inst.params).unwrap();
        let ws = inst.params.subchannel_bandwidth_hz();
        let lo: f64 = inst.clusters.iter().map(|c| min_power_allocation(c, ws).1).sum();
        let hi = inst.params.p_max_w().min(inst.params.p_mask_w().iter().sum());
        let step = (hi - lo) / (cfg.grid_points - 1) as f64;
        let marginal = v
            .h_eff
            .iter()
            .zip(&v.q_tilde_min)
            .map(|(h, q)| ws * h / (std::f64::consts::LN_2 * (1.0 + h * q)))
            .fold(0.0, f64::max);
        let resolution = step * (marginal + a) / (lo + inst.params.p_circuit_w());
        assert!(a - b <= resolution, "case {case}: solver {a} vs sweep {b}, resolution {resolution}");
    }
}

fn random_barrier(r: &mut ChaCha8Rng) -> (BarrierObjective, Vec<f64>) {
    let n = r.random_range(1..=4);
    let h: Vec<f64> = (0..n).map(|_| 10f64.powf(r.random_range(-1.0..3.0))).collect();
    let lo: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let hi: Vec<f64> =
        lo.iter().map(|l| if r.random_bool(0.2) { f64::INFINITY } else { l + r.random_range(0.5..3.0) }).collect();
    let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + r.random_range(0.1..0.9) * (h.min(l + 3.0) - l)).collect();
    let budget = x.iter().sum::<f64>() + r.random_range(0.1..2.0);
    let b = BarrierObjective { h, lo, hi, budget, lambda_norm: r.random_range(0.0..2.0), t: 10f64.powf(r.random_range(0.0..4.0)) };
    (b, x)
}

#[test]
fn barrier_derivatives_match_finite_differences() {
    let mut r = rng(18);
    for case in 0..100 {
        let (b, x) = random_barrier(&mut r);
        assert!(b.is_strictly_feasible(&x));
        let f = |y: &[f64]| b.value(y).unwrap();
        let g = |y: &[f64]| b.gradient(y);
        let e = finite_difference_check(&f, &g, &x, 1e-6);
        assert!(e <= 1e-5, "case {case}: gradient error {e}");

        let f0 = |y: &[f64]| b.f0(y);
        let g0 = |y: &[f64]| b.f0_gradient(y);
        let e0 = finite_difference_check(&f0, &g0, &x, 1e-6);
        assert!(e0 <= 1e-7, "case {case}: f0 gradient error {e0}");

        let v: Vec<f64> = (0..x.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let slack = x.iter().zip(&b.lo).map(|(x, l)| x - l).fold(b.budget - x.iter().sum::<f64>(), f64::min);
        let hv = |y: &[f64], v: &[f64]| b.hessian_vector(y, v);
        let eh = hessian_vector_check(&g, &hv, &x, &v, 1e-6 * slack);
        assert!(eh <= 1e-5, "case {case}: Hessian-vector error {eh}");
    }
}

#[test]
fn finite_difference_check_is_exact_on_quadratics() {
    let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1] + 0.5 * x[1] * x[1];
    let g = |x: &[f64]| vec![2.0 * x[0] + 3.0 * x[1], 3.0 * x[0] + x[1]];
    assert!(finite_difference_check(&f, &g, &[1.3, -0.7], 1e-4) <= 1e-10);
}

#[test]
fn full_budget_when_sufficient_condition_holds() {
    let mut r = rng(19);
    let shape = InstanceShape { p_circuit_w: 50.0, ..Default::default() };
    let mut checked = 0;
    for case in 0..300 {
        let inst = random_instance(&mut r, &shape);
        let s = dinkelbach_solve(&inst.clusters, &inst.params, InnerSolver::Subgradient).unwrap();
        let sum_mask: f64 = inst.params.p_mask_w().iter().sum();
        if s.state.full_power_used && sum_mask > inst.params.p_max_w() {
            checked += 1;
            let used = s.report.allocation.total_power_w();
            assert!(rel(used, inst.params.p_max_w()) <= 1e-8, "case {case}: {used} of {}", inst.params.p_max_w());
        }
    }
    assert!(checked > 0);
}

#[test]
fn ee_beats_full_power_when_condition_fails() {
    let mut strict = 0;
    for (p_max, p_c) in [(10.0, 1.0), (100.0, 0.1), (50.0, 0.5)] {
        let c = vec![
            ClusterSpec::simple(0, vec![1.0, 8.0], vec![0.5, 0.0]).unwrap(),
            ClusterSpec::simple(1, vec![2.0], vec![0.2]).unwrap(),
        ];
        let p = SystemParams::with_uniform_mask(2.0, 2, p_max, p_max, p_c, 2).unwrap();
        let ee = dinkelbach_solve(&c, &p, InnerSolver::Barrier).unwrap();
        assert!(!ee.state.full_power_used);
        let sr = maximize_sum_rate(&c, &p, None).unwrap();
        assert!(ee.report.ee_bps_per_joule >= sr.ee_bps_per_joule);
        if ee.report.ee_bps_per_joule - sr.ee_bps_per_joule >= 1e-9 {
            strict += 1;
        }
    }
    assert!(strict >= 1);
}

#[test]
fn equal_split_at_high_cnr() {
    let c = ClusterSpec::simple(0, vec![1e4, 4e4], vec![1.0, 0.0]).unwrap();
    let q = 2.0;
    let p = intra_cluster_optimal(&c, q, f64::INFINITY, 1.0).unwrap();
    for x in p {
        assert!(rel(x, q / 2.0) <= 0.01, "{x}");
    }
}
