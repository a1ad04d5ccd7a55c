//! `noma-opt`: solve single instances or run Monte-Carlo sweeps.
//!
//! Exit codes: 0 on success (and for `check`, whatever it finds), 1 for
//! usage or configuration errors, 2 when `solve` is given an infeasible
//! instance.

mod instance;
mod sweep;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use noma_core::cluster::{feasibility_check, Feasibility};
use noma_core::energy::{dinkelbach_solve, full_power_condition, InnerSolver};
use noma_core::sim::{run_monte_carlo, Objective, ScenarioConfig, Scheme};
use noma_core::sumrate::{equal_power_optimality, maximize_sum_rate, to_virtual_oma, EQUAL_POWER_C_THRESHOLD};
use noma_core::{ClusterSpec, NomaError, SolveReport, SystemParams};
use serde_json::json;

use crate::instance::InstanceFile;

const THREADS_ENV: &str = "NOMA_OPT_THREADS";

#[derive(Parser)]
#[command(name = "noma-opt", version, about = "Power allocation for downlink multicarrier NOMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Sumrate,
    Ee,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerArg {
    Subgradient,
    Barrier,
}

impl From<InnerArg> for InnerSolver {
    fn from(a: InnerArg) -> Self {
        match a {
            InnerArg::Subgradient => InnerSolver::Subgradient,
            InnerArg::Barrier => InnerSolver::Barrier,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the report as JSON.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "sumrate")]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value = "subgradient")]
        inner: InnerArg,
    },
    /// Feasibility and optimality diagnostics for one instance.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte-Carlo sweep over user counts, demands and schemes; writes CSV.
    Sweep {
        /// Scenario TOML; every key is optional.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated, e.g. `SC-NOMA,FD-NOMA-4,FDMA`.
        #[arg(long, value_delimiter = ',')]
        scheme: Option<Vec<Scheme>>,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long, value_enum)]
        inner: Option<InnerArg>,
        /// Comma-separated user counts.
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<usize>>,
        /// Comma-separated minimum rates in bit/s.
        #[arg(long = "r-min", value_delimiter = ',')]
        r_min: Option<Vec<f64>>,
        /// Worker threads; overrides NOMA_OPT_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Infeasible(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve { config, objective, inner } => solve(&config, objective, inner.into()),
        Command::Check { config } => check(&config).map_err(Failure::from),
        Command::Sweep { config, seed, realizations, out, scheme, objective, inner, users, r_min, threads } => {
            let overrides = SweepOverrides { seed, realizations, scheme, objective, inner, users, r_min };
            sweep_cmd(config.as_deref(), overrides, out.as_deref(), threads).map_err(Failure::from)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_instance(path: &Path) -> anyhow::Result<(Vec<ClusterSpec>, SystemParams)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    InstanceFile::parse(&text).and_then(|f| f.build()).with_context(|| format!("in {}", path.display()))
}

fn print_json(value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn report_json(report: &SolveReport, params: &SystemParams, objective: &str) -> serde_json::Value {
    json!({
        "objective": objective,
        "status": report.status,
        "sum_rate_bps": report.sum_rate_bps,
        "ee_bps_per_joule": report.ee_bps_per_joule,
        "total_power_w": report.allocation.total_power_w(),
        "p_max_w": params.p_max_w(),
        "cluster_budgets_w": report.allocation.cluster_budgets_w,
        "powers_w": report.allocation.powers_w,
        "rates_bps": report.rates_bps,
        "iterations": report.iterations,
    })
}

fn solve(path: &Path, objective: ObjectiveArg, inner: InnerSolver) -> Result<(), Failure> {
    let (clusters, params) = load_instance(path)?;
    if let Feasibility::Infeasible(r) = feasibility_check(&clusters, &params).map_err(anyhow::Error::from)? {
        return Err(Failure::Infeasible(r.to_string()));
    }
    let (report, name) = match objective {
        ObjectiveArg::Sumrate => (maximize_sum_rate(&clusters, &params, None), "sumrate"),
        ObjectiveArg::Ee => (dinkelbach_solve(&clusters, &params, inner).map(|s| s.report), "ee"),
    };
    let report = report.map_err(|e| match e {
        NomaError::Infeasible(r) => Failure::Infeasible(r.to_string()),
        e => Failure::Usage(e.into()),
    })?;
    print_json(&report_json(&report, &params, name))?;
    Ok(())
}

fn check(path: &Path) -> anyhow::Result<()> {
    let (clusters, params) = load_instance(path)?;
    let value = match feasibility_check(&clusters, &params)? {
        Feasibility::Infeasible(r) => json!({
            "feasible": false,
            "message": r.to_string(),
            "violating_clusters": r.mask_violations.iter().map(|v| v.cluster).collect::<Vec<_>>(),
            "report": r,
        }),
        Feasibility::Feasible { q_min_w } => {
            let equal = equal_power_optimality(&clusters, &params, EQUAL_POWER_C_THRESHOLD)?;
            let ee = dinkelbach_solve(&clusters, &params, InnerSolver::Subgradient)?;
            let v = to_virtual_oma(&clusters, &params)?;
            let holds = full_power_condition(&v, params.subchannel_bandwidth_hz(), ee.state.lambda);
            json!({
                "feasible": true,
                "q_min_w": q_min_w,
                "total_q_min_w": q_min_w.iter().sum::<f64>(),
                "p_max_w": params.p_max_w(),
                "equal_power_split": equal,
                "max_ee_bps_per_joule": ee.state.lambda,
                "full_power_condition_at_max_ee": holds,
            })
        }
    };
    print_json(&value)
}

struct SweepOverrides {
    seed: Option<u64>,
    realizations: Option<usize>,
    scheme: Option<Vec<Scheme>>,
    objective: Option<ObjectiveArg>,
    inner: Option<InnerArg>,
    users: Option<Vec<usize>>,
    r_min: Option<Vec<f64>>,
}

fn worker_threads(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?)),
        Err(_) => Ok(None),
    }
}

fn sweep_cmd(config: Option<&Path>, o: SweepOverrides, out: Option<&Path>, threads: Option<usize>) -> anyhow::Result<()> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<ScenarioConfig>(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.rng_seed = s;
    }
    if let Some(n) = o.realizations {
        cfg.n_realizations = n;
    }
    if let Some(s) = o.scheme {
        cfg.schemes = s;
    }
    if let Some(obj) = o.objective {
        cfg.objective = match obj {
            ObjectiveArg::Sumrate => Objective::Sumrate,
            ObjectiveArg::Ee => Objective::Ee,
        };
    }
    if let Some(i) = o.inner {
        cfg.inner = i.into();
    }
    if let Some(u) = o.users {
        cfg.n_users = u;
    }
    if let Some(r) = o.r_min {
        cfg.r_min_bps = r;
    }
    cfg.validate()?;
    let rows = run_monte_carlo(&cfg, worker_threads(threads)?)?;
    let warnings: usize = rows.iter().map(|r| r.n_solver_warnings).sum();
    if warnings > 0 {
        eprintln!("warning: {warnings} scheme evaluations fell back to the sum-rate allocation");
    }
    match out {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            sweep::write_csv(&rows, io::BufWriter::new(f))?;
        }
        None => sweep::write_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}
