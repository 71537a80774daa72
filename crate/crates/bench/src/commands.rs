//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use accsvrg::dataset::write_cache;
use accsvrg::fstar::estimate_fstar;
use accsvrg::harness::{
    check_coupling_inequality, check_equivalence, check_unbiasedness, check_variance_bound, overlap_experiment,
    MaskPolicy, Report, SimulationSpec,
};
use accsvrg::{
    compute_support_profile, derive_params_async, derive_params_serial, Coupling, Problem, Regularizer, Smoothness,
    SnapshotContext,
};
use clap::{Args, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use crate::config::{DataArgs, RunArgs, RunConfig, SyntheticSpec};
use crate::error::CliError;
use crate::output::{open_output, summary_line, Tags, TraceWriter};
use crate::solvers::{resolve_fstar, run_solver, Solver};

#[derive(Debug, Clone, Args)]
pub struct PrepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the loaded dataset as a binary cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Print the statistics as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n: usize,
    pub d: usize,
    pub nnz: usize,
    pub density: f64,
    pub delta: f64,
    pub max_d: f64,
    pub min_d: f64,
}

pub fn cmd_prep(args: &PrepArgs) -> Result<DatasetStats, CliError> {
    let raw = args.data.load_raw()?;
    let ds = args.data.finish(raw.clone())?;
    let (compact, profile) = compute_support_profile(&ds);
    let stats = DatasetStats {
        n: compact.n(),
        d: compact.d(),
        nnz: compact.nnz(),
        density: compact.density(),
        delta: profile.delta,
        max_d: profile.max_d(),
        min_d: profile.min_d(),
    };
    if compact.d() < ds.d() {
        info!("{} unused coordinates dropped", ds.d() - compact.d());
    }
    if let Some(path) = &args.cache {
        let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(f);
        // Unnormalized, so loading the cache repeats the exact same scaling.
        write_cache(&raw, &mut w)?;
        w.flush()?;
    }
    let mut out = std::io::stdout().lock();
    if args.json {
        writeln!(out, "{}", serde_json::to_string(&stats).expect("stats serialize"))?;
    } else {
        writeln!(out, "n        {}", stats.n)?;
        writeln!(out, "d        {}", stats.d)?;
        writeln!(out, "nnz      {}", stats.nnz)?;
        writeln!(out, "density  {:e}", stats.density)?;
        writeln!(out, "delta    {:e}", stats.delta)?;
        writeln!(out, "max_D    {}", stats.max_d)?;
        writeln!(out, "min_D    {}", stats.min_d)?;
    }
    Ok(stats)
}

/// Summary goes to stdout when the CSV goes to a file, else to stderr.
fn print_summary(cfg: &RunConfig, line: &str) {
    if cfg.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

pub fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let cfg = args.resolve(Solver::SsAccSvrg)?;
    let ds = cfg.data.load()?;
    let p = cfg.problem(&ds)?;
    let fstar = resolve_fstar(&p, &cfg)?;
    let out = run_solver(&p, &cfg, fstar)?;
    let mut w = TraceWriter::new(open_output(cfg.out.as_deref())?, Tags::default())?;
    w.write_trace(&out.trace, None, None)?;
    w.finish()?;
    print_summary(&cfg, &summary_line(cfg.solver.name(), &out));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Omega,
    Mu,
    TauTilde,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::Mu => "mu",
            SweepParam::TauTilde => "tau_tilde",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.values.is_empty() {
        return Err(CliError::Usage("--values must be nonempty".into()));
    }
    let base = args.run.resolve(Solver::SsAccSvrg)?;
    if args.param == SweepParam::TauTilde && base.solver != Solver::AsAccSvrg {
        warn!("tau_tilde sweep only changes as-acc-svrg runs");
    }
    if args.param == SweepParam::Mu && base.fstar.is_some() {
        return Err(CliError::Usage("--fstar is fixed for one mu and cannot be combined with a mu sweep".into()));
    }
    let ds = base.data.load()?;
    let mut w = TraceWriter::new(open_output(base.out.as_deref())?, Tags { sweep_value: true, threads: true })?;
    let mut shared: Option<(Problem, f64)> = None;
    for &v in &args.values {
        let mut cfg = base.clone();
        match args.param {
            SweepParam::Omega => cfg.omega = v,
            SweepParam::Mu => cfg.mu = v,
            SweepParam::TauTilde => cfg.tau_tilde = v,
        }
        cfg.validate()?;
        let (p, fstar) = match (&shared, args.param) {
            (Some((p, f)), SweepParam::Omega | SweepParam::TauTilde) => (p.clone(), *f),
            _ => {
                let p = cfg.problem(&ds)?;
                let f = resolve_fstar(&p, &cfg)?;
                (p, f)
            }
        };
        let out = run_solver(&p, &cfg, fstar)?;
        w.write_trace(&out.trace, Some(v), Some(cfg.threads))?;
        print_summary(&cfg, &summary_line(&format!("{} {}={v}", cfg.solver.name(), args.param.name()), &out));
        shared = Some((p, fstar));
    }
    w.finish()
}

#[derive(Debug, Clone, Args)]
pub struct SpeedupArgs {
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub thread_list: Vec<usize>,
    /// Suboptimality whose wall-clock time is compared.
    #[arg(long, default_value_t = 1e-5)]
    pub target: f64,
    /// Repetitions per thread count; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub threads: usize,
    pub wall_time_s: f64,
    pub speedup: f64,
    pub observed_tau: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupTable {
    pub target: f64,
    pub rows: Vec<SpeedupRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Sorted unique thread counts, always including 1.
pub fn normalize_thread_list(list: &[usize]) -> Result<Vec<usize>, CliError> {
    if list.iter().any(|&t| t == 0) {
        return Err(CliError::Usage("thread counts must be >= 1".into()));
    }
    let mut out = list.to_vec();
    out.sort_unstable();
    out.dedup();
    if out.len() < list.len() {
        warn!("duplicate thread counts removed: {list:?} -> {out:?}");
    }
    if out.first() != Some(&1) {
        warn!("thread list lacks 1; adding the single-thread baseline");
        out.insert(0, 1);
    }
    Ok(out)
}

pub fn cmd_speedup(args: SpeedupArgs) -> Result<SpeedupTable, CliError> {
    if !(args.target > 0.0) {
        return Err(CliError::Usage(format!("--target must be positive, got {}", args.target)));
    }
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be >= 1".into()));
    }
    let threads = normalize_thread_list(&args.thread_list)?;
    let mut cfg = args.run.resolve(Solver::AsAccSvrg)?;
    if !cfg.solver.is_async() {
        warn!("{} is serial; every thread count runs the same computation", cfg.solver.name());
    }
    cfg.target_subopt = Some(args.target);
    let ds = cfg.data.load()?;
    let p = cfg.problem(&ds)?;
    let fstar = resolve_fstar(&p, &cfg)?;
    let mut rows: Vec<SpeedupRow> = Vec::new();
    for &t in &threads {
        cfg.threads = t;
        let mut times = Vec::with_capacity(args.reps);
        let mut tau = None;
        for rep in 0..args.reps {
            let out = run_solver(&p, &cfg, fstar)?;
            tau = tau.max(out.observed_tau);
            match out.time_to(args.target) {
                Some(s) => times.push(s),
                None if t == 1 => {
                    return Err(CliError::Input(format!(
                        "target {:e} unreachable at 1 thread within {} passes (best {:.3e}); raise --budget-passes",
                        args.target,
                        cfg.budget_passes,
                        out.trace.iter().map(|r| r.suboptimality).fold(f64::INFINITY, f64::min)
                    )))
                }
                None => warn!("{t} threads, repetition {rep}: target not reached"),
            }
        }
        if times.is_empty() {
            warn!("{t} threads never reached the target; row omitted");
            continue;
        }
        // The clock excludes objective evaluation; guard a zero reading.
        let wall = median(times).max(f64::MIN_POSITIVE);
        let base = rows.first().map_or(wall, |r| r.wall_time_s);
        rows.push(SpeedupRow { threads: t, wall_time_s: wall, speedup: base / wall, observed_tau: tau });
    }
    let table = SpeedupTable { target: args.target, rows };
    let mut w = csv::Writer::from_writer(open_output(cfg.out.as_deref())?);
    w.write_record(["threads", "wall_time_s", "speedup", "observed_tau"])?;
    for r in &table.rows {
        w.write_record([
            r.threads.to_string(),
            r.wall_time_s.to_string(),
            r.speedup.to_string(),
            r.observed_tau.map_or_else(String::new, |t| t.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Unbiased,
    Variance,
    Overlap,
    Equivalence,
    Coupling,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Trial count (default depends on the suite).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    pub mu: f64,
    /// Smoothness constant used by the schedules: safe, nominal or a number.
    #[arg(long, default_value = "safe", value_parser = crate::config::parse_smoothness)]
    pub smoothness: Smoothness,
    /// Overlap bounds to simulate.
    #[arg(long, value_delimiter = ',', default_value = "1,5,20")]
    pub tau: Vec<usize>,
    /// Per-coordinate missing probability of the Bernoulli mask policy.
    #[arg(long, default_value_t = 0.5)]
    pub mask_prob: f64,
    /// Epochs compared by the equivalence suite.
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the JSON reports here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn deterministic_point(d: usize, seed: u64, phase: f64, scale: f64) -> Vec<f64> {
    let s = seed as f64;
    (0..d).map(|v| scale * (v as f64 * 0.7 + s * 1.3 + phase).sin()).collect()
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Vec<Report>, CliError> {
    let mut data = args.data.clone();
    if !data.is_set() {
        data.synthetic = Some(match args.suite {
            Suite::Equivalence => SyntheticSpec::Dense { n: 1000, d: 50 },
            Suite::Overlap => SyntheticSpec::Random { n: 100, d: 40, density: 0.1 },
            _ => SyntheticSpec::Random { n: 50, d: 20, density: 0.2 },
        });
    }
    let ds = data.load()?;
    let p = Problem::new(&ds, args.mu, Regularizer::Sparse, args.smoothness)?;
    let d = p.d();
    let reports = match args.suite {
        Suite::Unbiased => {
            let trials = args.trials.unwrap_or(20);
            let pts: Vec<_> = (0..trials as u64)
                .map(|k| (deterministic_point(d, args.seed + k, 0.0, 1.0), deterministic_point(d, args.seed + k, 2.0, 1.0)))
                .collect();
            vec![check_unbiasedness(&p, &pts)?]
        }
        Suite::Variance => vec![check_variance_bound(&p, args.trials.unwrap_or(1000), args.seed)?],
        Suite::Overlap => {
            let trials = args.trials.unwrap_or(1000);
            let snap = SnapshotContext::new(&p, deterministic_point(d, args.seed, 0.0, 0.1))?;
            let z0 = deterministic_point(d, args.seed, 1.0, 0.1);
            let mut out = Vec::new();
            for &tau in &args.tau {
                let pr = derive_params_async(p.n(), p.kappa(), p.lipschitz(), 50.0, p.profile().delta, tau as f64, None)?;
                let c = Coupling::new(pr.theta, pr.phi, pr.eta);
                for policy in [MaskPolicy::AllMissing, MaskPolicy::Bernoulli(args.mask_prob)] {
                    let spec = SimulationSpec { m: pr.m, coupling: c, tau, policy, seed: args.seed, epoch: 0 };
                    out.push(overlap_experiment(&p, &snap, &z0, &spec, trials)?);
                }
            }
            out
        }
        Suite::Equivalence => {
            if p.profile().delta < 1.0 {
                warn!("equivalence is only meaningful on fully dense data (delta = {})", p.profile().delta);
            }
            let mut pr = derive_params_serial(p.n(), p.kappa(), p.lipschitz(), 50.0, None)?;
            pr.seed = args.seed;
            vec![check_equivalence(&p, &pr, args.epochs)?]
        }
        Suite::Coupling => {
            let est = estimate_fstar(&p, 2000.0, None)?;
            let x_star = est.x.expect("fresh estimate carries its point");
            let pr = derive_params_serial(p.n(), p.kappa(), p.lipschitz(), 50.0, None)?;
            vec![check_coupling_inequality(&p, &pr, &x_star, est.fstar, args.trials.unwrap_or(100), args.seed)?]
        }
    };
    let mut out = open_output(args.out.as_deref())?;
    for r in &reports {
        writeln!(out, "{}", r.to_json())?;
    }
    out.flush()?;
    let failed: Vec<&Report> = reports.iter().filter(|r| r.violated).collect();
    if !failed.is_empty() {
        let worst = failed.iter().map(|r| r.to_json()).collect::<Vec<_>>().join("; ");
        return Err(CliError::Verification(worst));
    }
    Ok(reports)
}
