//! Run configuration: command-line flags layered over an optional JSON file.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use accsvrg::dataset::{gen_dense, gen_random_sparse, gen_synthetic, read_cache, read_libsvm_file};
use accsvrg::{normalize_rows, Problem, Regularizer, Smoothness, SparseDataset};
use clap::Args;
use serde::Deserialize;

use crate::error::CliError;
use crate::solvers::Solver;

/// Generated dataset: `N` (identity design), `random:N:D:DENSITY` or
/// `dense:N:D`.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticSpec {
    Identity(usize),
    Random { n: usize, d: usize, density: f64 },
    Dense { n: usize, d: usize },
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| x.parse::<usize>().map_err(|_| format!("bad size {x:?} in synthetic spec {s:?}"));
        let spec = match parts.as_slice() {
            [n] | ["identity", n] => SyntheticSpec::Identity(num(n)?),
            ["random", n, d, q] => {
                let density = q.parse::<f64>().map_err(|_| format!("bad density {q:?}"))?;
                if !(density > 0.0 && density <= 1.0) {
                    return Err(format!("density must lie in (0, 1], got {density}"));
                }
                SyntheticSpec::Random { n: num(n)?, d: num(d)?, density }
            }
            ["dense", n, d] => SyntheticSpec::Dense { n: num(n)?, d: num(d)? },
            _ => return Err(format!("expected N, random:N:D:DENSITY or dense:N:D, got {s:?}")),
        };
        let (n, d) = match spec {
            SyntheticSpec::Identity(n) => (n, n),
            SyntheticSpec::Random { n, d, .. } | SyntheticSpec::Dense { n, d } => (n, d),
        };
        if n == 0 || d == 0 {
            return Err("synthetic sizes must be >= 1".into());
        }
        Ok(spec)
    }
}

impl<'de> Deserialize<'de> for SyntheticSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Size(usize),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Size(n) => Ok(SyntheticSpec::Identity(n)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub fn parse_smoothness(s: &str) -> Result<Smoothness, String> {
    s.parse()
}

/// Dataset selection shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct DataArgs {
    /// LIBSVM file, or a binary cache written by `prep --cache` (`.bin`).
    #[arg(long, conflicts_with = "synthetic")]
    pub dataset: Option<PathBuf>,
    /// Generated data: N (identity design), random:N:D:DENSITY or dense:N:D.
    #[arg(long)]
    pub synthetic: Option<SyntheticSpec>,
    /// Seed of the data generator.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Declared feature dimension for LIBSVM input.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Scale rows to unit l2 norm (default true).
    #[arg(long)]
    pub normalize: Option<bool>,
}

impl DataArgs {
    fn or(self, file: DataArgs) -> DataArgs {
        let (dataset, synthetic) = if self.dataset.is_some() || self.synthetic.is_some() {
            (self.dataset, self.synthetic)
        } else {
            (file.dataset, file.synthetic)
        };
        DataArgs {
            dataset,
            synthetic,
            data_seed: self.data_seed.or(file.data_seed),
            dim: self.dim.or(file.dim),
            normalize: self.normalize.or(file.normalize),
        }
    }

    pub fn is_set(&self) -> bool {
        self.dataset.is_some() || self.synthetic.is_some()
    }

    /// Loads or generates the dataset; rows are normalized unless disabled.
    pub fn load(&self) -> Result<SparseDataset, CliError> {
        self.finish(self.load_raw()?)
    }

    /// The dataset as read or generated, before normalization.
    pub fn load_raw(&self) -> Result<SparseDataset, CliError> {
        Ok(match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) => return Err(CliError::Usage("--dataset and --synthetic are exclusive".into())),
            (None, None) => return Err(CliError::Usage("a dataset is required (--dataset or --synthetic)".into())),
            (Some(path), None) => load_file(path, self.dim)?,
            (None, Some(spec)) => {
                let seed = self.data_seed.unwrap_or(0);
                match *spec {
                    SyntheticSpec::Identity(n) => gen_synthetic(n, seed),
                    SyntheticSpec::Random { n, d, density } => gen_random_sparse(n, d, density, 0.1, seed),
                    SyntheticSpec::Dense { n, d } => gen_dense(n, d, seed),
                }
            }
        })
    }

    pub fn finish(&self, ds: SparseDataset) -> Result<SparseDataset, CliError> {
        if self.normalize.unwrap_or(true) {
            normalize_rows(&ds).map_err(|e| CliError::Input(e.to_string()))
        } else {
            Ok(ds)
        }
    }
}

fn load_file(path: &Path, dim: Option<usize>) -> Result<SparseDataset, CliError> {
    let ctx = |e: accsvrg::DataError| CliError::Input(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "bin") {
        let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let ds = read_cache(BufReader::new(f)).map_err(ctx)?;
        match dim {
            Some(d) => ds.with_dim(d).map_err(ctx),
            None => Ok(ds),
        }
    } else {
        read_libsvm_file(path, dim).map_err(ctx)
    }
}

/// Every `run` option; all optional so a JSON file can supply any subset.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct RunArgs {
    /// JSON file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// l2 regularization strength.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Smoothness constant: safe, nominal or a number.
    #[arg(long, value_parser = parse_smoothness)]
    pub smoothness: Option<Smoothness>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    /// Worker threads (asynchronous solvers only).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Budget in effective passes.
    #[arg(long)]
    pub budget_passes: Option<f64>,
    /// Stop once the suboptimality reaches this value.
    #[arg(long)]
    pub target_subopt: Option<f64>,
    /// Restart-frequency constant of the accelerated solvers.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Overlap estimate in the asynchronous schedule.
    #[arg(long)]
    pub tau_tilde: Option<f64>,
    /// Baseline step 1/(c L): SVRG 4, KroMagnon 2, SAGA and ASAGA 3.
    #[arg(long)]
    pub step_const: Option<f64>,
    /// Inner iterations per epoch (default 2n).
    #[arg(long)]
    pub m: Option<usize>,
    /// Stop after this many restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Known optimal value; skips the f* solve.
    #[arg(long)]
    pub fstar: Option<f64>,
    /// Pass budget of the f* solve.
    #[arg(long)]
    pub fstar_passes: Option<f64>,
    /// Append-only f* cache file.
    #[arg(long)]
    pub fstar_cache: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataArgs,
    pub mu: f64,
    pub smoothness: Smoothness,
    pub solver: Solver,
    pub threads: usize,
    pub seed: u64,
    pub budget_passes: f64,
    pub target_subopt: Option<f64>,
    pub omega: f64,
    pub tau_tilde: f64,
    pub step_const: Option<f64>,
    pub m: Option<usize>,
    pub restarts: Option<usize>,
    pub fstar: Option<f64>,
    pub fstar_passes: f64,
    pub fstar_cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_MU: f64 = 1e-5;
pub const DEFAULT_OMEGA: f64 = 50.0;
pub const DEFAULT_BUDGET_PASSES: f64 = 100.0;
pub const DEFAULT_FSTAR_PASSES: f64 = 1000.0;

/// Keys accepted in a JSON config file.
const CONFIG_KEYS: &[&str] = &[
    "dataset", "synthetic", "data_seed", "dim", "normalize", "mu", "smoothness", "solver", "threads", "seed",
    "budget_passes", "target_subopt", "omega", "tau_tilde", "step_const", "m", "restarts", "fstar", "fstar_passes",
    "fstar_cache", "out",
];

impl RunArgs {
    /// Parses a config object, rejecting unknown keys.
    pub fn from_json(value: serde_json::Value) -> Result<RunArgs, String> {
        let obj = value.as_object().ok_or("config must be a JSON object")?;
        if let Some(k) = obj.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(format!("unknown config key {k:?}"));
        }
        serde_json::from_value(value).map_err(|e| e.to_string())
    }

    fn or(self, file: RunArgs) -> RunArgs {
        RunArgs {
            config: None,
            data: self.data.or(file.data),
            mu: self.mu.or(file.mu),
            smoothness: self.smoothness.or(file.smoothness),
            solver: self.solver.or(file.solver),
            threads: self.threads.or(file.threads),
            seed: self.seed.or(file.seed),
            budget_passes: self.budget_passes.or(file.budget_passes),
            target_subopt: self.target_subopt.or(file.target_subopt),
            omega: self.omega.or(file.omega),
            tau_tilde: self.tau_tilde.or(file.tau_tilde),
            step_const: self.step_const.or(file.step_const),
            m: self.m.or(file.m),
            restarts: self.restarts.or(file.restarts),
            fstar: self.fstar.or(file.fstar),
            fstar_passes: self.fstar_passes.or(file.fstar_passes),
            fstar_cache: self.fstar_cache.or(file.fstar_cache),
            out: self.out.or(file.out),
        }
    }

    /// Merges the config file (if any), applies defaults and validates.
    pub fn resolve(self, default_solver: Solver) -> Result<RunConfig, CliError> {
        let merged = match &self.config {
            Some(path) => {
                let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                let value: serde_json::Value = serde_json::from_reader(BufReader::new(f))
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let file = RunArgs::from_json(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                self.or(file)
            }
            None => self,
        };
        let cfg = RunConfig {
            data: merged.data,
            mu: merged.mu.unwrap_or(DEFAULT_MU),
            smoothness: merged.smoothness.unwrap_or(Smoothness::Safe),
            solver: merged.solver.unwrap_or(default_solver),
            threads: merged.threads.unwrap_or(1),
            seed: merged.seed.unwrap_or(0),
            budget_passes: merged.budget_passes.unwrap_or(DEFAULT_BUDGET_PASSES),
            target_subopt: merged.target_subopt,
            omega: merged.omega.unwrap_or(DEFAULT_OMEGA),
            tau_tilde: merged.tau_tilde.unwrap_or(0.0),
            step_const: merged.step_const,
            m: merged.m,
            restarts: merged.restarts,
            fstar: merged.fstar,
            fstar_passes: merged.fstar_passes.unwrap_or(DEFAULT_FSTAR_PASSES),
            fstar_cache: merged.fstar_cache,
            out: merged.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if !self.data.is_set() {
            return bad("a dataset is required (--dataset or --synthetic)".into());
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("--mu must be positive, got {}", self.mu));
        }
        if self.threads == 0 {
            return bad("--threads must be >= 1".into());
        }
        if !(self.budget_passes > 0.0) {
            return bad(format!("--budget-passes must be positive, got {}", self.budget_passes));
        }
        if let Some(t) = self.target_subopt {
            if !(t > 0.0) {
                return bad(format!("--target-subopt must be positive, got {t}"));
            }
        }
        if !(self.omega > 1.0 && self.omega.is_finite()) {
            return bad(format!("--omega must be > 1, got {}", self.omega));
        }
        if !(self.tau_tilde >= 0.0 && self.tau_tilde.is_finite()) {
            return bad(format!("--tau-tilde must be >= 0, got {}", self.tau_tilde));
        }
        if let Some(c) = self.step_const {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("--step-const must be positive, got {c}"));
            }
        }
        if self.m == Some(0) {
            return bad("--m must be >= 1".into());
        }
        Ok(())
    }

    /// Problem with the sparse per-sample regularizer.
    pub fn problem(&self, ds: &SparseDataset) -> Result<Problem, CliError> {
        Ok(Problem::new(ds, self.mu, Regularizer::Sparse, self.smoothness)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_specs() {
        assert_eq!("100".parse::<SyntheticSpec>().unwrap(), SyntheticSpec::Identity(100));
        assert_eq!(
            "random:50:20:0.2".parse::<SyntheticSpec>().unwrap(),
            SyntheticSpec::Random { n: 50, d: 20, density: 0.2 }
        );
        assert_eq!("dense:10:3".parse::<SyntheticSpec>().unwrap(), SyntheticSpec::Dense { n: 10, d: 3 });
        for bad in ["", "0", "random:5:5:0", "random:5:5:2", "dense:4", "cube:3"] {
            assert!(bad.parse::<SyntheticSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file() {
        let file = RunArgs::from_json(serde_json::json!({"synthetic": 30, "mu": 0.01, "seed": 4, "solver": "saga"})).unwrap();
        let flags = RunArgs { seed: Some(9), ..Default::default() };
        let cfg = flags.or(file).resolve(Solver::SsAccSvrg).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mu, 0.01);
        assert_eq!(cfg.solver, Solver::Saga);
        assert_eq!(cfg.data.synthetic, Some(SyntheticSpec::Identity(30)));
    }

    #[test]
    fn flag_dataset_replaces_file_dataset() {
        let file = RunArgs::from_json(serde_json::json!({"dataset": "a.svm"})).unwrap();
        let flags = RunArgs { data: DataArgs { synthetic: Some(SyntheticSpec::Identity(5)), ..Default::default() }, ..Default::default() };
        let merged = flags.or(file);
        assert!(merged.data.dataset.is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunArgs::from_json(serde_json::json!({"mue": 1})).is_err());
        assert!(RunArgs::from_json(serde_json::json!({"solver": "sgd"})).is_err());
        assert!(RunArgs::from_json(serde_json::json!([1])).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let base = || RunArgs { data: DataArgs { synthetic: Some(SyntheticSpec::Identity(5)), ..Default::default() }, ..Default::default() };
        assert!(base().resolve(Solver::SsAccSvrg).is_ok());
        assert!(RunArgs { threads: Some(0), ..base() }.resolve(Solver::SsAccSvrg).is_err());
        assert!(RunArgs { budget_passes: Some(0.0), ..base() }.resolve(Solver::SsAccSvrg).is_err());
        assert!(RunArgs { omega: Some(1.0), ..base() }.resolve(Solver::SsAccSvrg).is_err());
        assert!(RunArgs::default().resolve(Solver::SsAccSvrg).is_err());
    }
}
