use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma-opt")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn solve_spends_the_whole_budget() {
    let cfg = fixture("two_clusters.toml");
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let total = v["total_power_w"].as_f64().unwrap();
    assert!((total - 4.0).abs() <= 4e-8, "{total}");
    // Non-head users sit exactly at their demands.
    assert!((v["rates_bps"][0][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["rates_bps"][1][0].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn ee_solvers_agree() {
    let cfg = fixture("two_clusters.toml");
    let ee = |inner: &str| {
        let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--objective", "ee", "--inner", inner]);
        assert_eq!(out.status.code(), Some(0));
        json(&out)["ee_bps_per_joule"].as_f64().unwrap()
    };
    let (a, b) = (ee("subgradient"), ee("barrier"));
    assert!((a - b).abs() <= 1e-6 * a, "{a} vs {b}");
}

#[test]
fn check_names_violating_clusters() {
    let cfg = fixture("infeasible.toml");
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["feasible"], false);
    assert_eq!(v["violating_clusters"], serde_json::json!([0]));
}

#[test]
fn solve_on_infeasible_instance_exits_two() {
    let cfg = fixture("infeasible.toml");
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cluster 0"));
}

#[test]
fn malformed_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[system]\nn_subchannels = \"two\"\n").unwrap();
    let out = run(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["solve", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_realizations_is_a_usage_error() {
    assert_eq!(run(&["sweep", "--realizations", "0"]).status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn sweep_writes_csv_with_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, "n_users = [6]\nr_min_bps = [500000.0]\nn_realizations = 10\n").unwrap();
    let out_path = dir.path().join("out.csv");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--scheme",
        "SC-NOMA,FDMA",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "scheme,K,r_min_bps,outage,avg_min_power_w,avg_sum_rate_bps,avg_ee,n_feasible");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("SC-NOMA,6,"));
}
