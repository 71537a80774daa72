//! Registered solvers and their default settings.

use accsvrg::asynch::{as_acc_svrg_async, asaga_async, kromagnon_async};
use accsvrg::fstar::{estimate_fstar, FstarCache};
use accsvrg::serial::{katyusha_lagged, saga_serial, ss_acc_svrg, ss_acc_svrg_lagged, svrg_serial, KatyushaParams};
use accsvrg::{derive_params_async, derive_params_serial, Budget, Problem, Regularizer, RunControl, SolverOutput, SolverParams};
use clap::ValueEnum;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    SsAccSvrg,
    AsAccSvrg,
    Svrg,
    Kromagnon,
    Saga,
    Asaga,
    Katyusha,
    SsAccSvrgLagged,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::SsAccSvrg => "ss-acc-svrg",
            Solver::AsAccSvrg => "as-acc-svrg",
            Solver::Svrg => "svrg",
            Solver::Kromagnon => "kromagnon",
            Solver::Saga => "saga",
            Solver::Asaga => "asaga",
            Solver::Katyusha => "katyusha",
            Solver::SsAccSvrgLagged => "ss-acc-svrg-lagged",
        }
    }

    pub fn is_async(self) -> bool {
        matches!(self, Solver::AsAccSvrg | Solver::Kromagnon | Solver::Asaga)
    }

    /// Lagged-update solvers run on the dense regularizer split.
    pub fn regularizer(self) -> Regularizer {
        match self {
            Solver::Katyusha | Solver::SsAccSvrgLagged => Regularizer::Dense,
            _ => Regularizer::Sparse,
        }
    }

    fn uses_omega(self) -> bool {
        matches!(self, Solver::SsAccSvrg | Solver::AsAccSvrg | Solver::SsAccSvrgLagged)
    }

    fn uses_step_const(self) -> bool {
        matches!(self, Solver::Svrg | Solver::Kromagnon | Solver::Saga | Solver::Asaga)
    }
}

/// `f*` from the config, the cache, or a fresh high-accuracy solve.
pub fn resolve_fstar(p: &Problem, cfg: &RunConfig) -> Result<f64, CliError> {
    if let Some(f) = cfg.fstar {
        return Ok(f);
    }
    let cache = cfg.fstar_cache.as_ref().map(FstarCache::new);
    let est = estimate_fstar(p, cfg.fstar_passes, cache.as_ref())?;
    if est.from_cache {
        info!("f* = {:.17e} (cached)", est.fstar);
    } else {
        info!("f* = {:.17e} (gradient norm {:.3e})", est.fstar, est.grad_norm.unwrap_or(f64::NAN));
    }
    Ok(est.fstar)
}

/// Accelerated schedule for `cfg` on `p`; asynchronous when `cfg.solver` is.
pub fn accelerated_params(p: &Problem, cfg: &RunConfig) -> Result<SolverParams, CliError> {
    let mut params = if cfg.solver == Solver::AsAccSvrg {
        derive_params_async(p.n(), p.kappa(), p.lipschitz(), cfg.omega, p.profile().delta, cfg.tau_tilde, cfg.m)?
    } else {
        derive_params_serial(p.n(), p.kappa(), p.lipschitz(), cfg.omega, cfg.m)?
    };
    params.seed = cfg.seed;
    Ok(params)
}

/// Runs `cfg.solver` on `p` (built with the sparse regularizer).
pub fn run_solver(p: &Problem, cfg: &RunConfig, fstar: f64) -> Result<SolverOutput, CliError> {
    let s = cfg.solver;
    if cfg.threads > 1 && !s.is_async() {
        warn!("{} is serial; --threads {} ignored", s.name(), cfg.threads);
    }
    if cfg.step_const.is_some() && !s.uses_step_const() {
        warn!("{} has no step constant; --step-const ignored", s.name());
    }
    if cfg.omega != crate::config::DEFAULT_OMEGA && !s.uses_omega() {
        warn!("{} has no restart schedule; --omega ignored", s.name());
    }
    if cfg.tau_tilde != 0.0 && s != Solver::AsAccSvrg {
        warn!("--tau-tilde only affects as-acc-svrg");
    }
    let mut budget = Budget::passes(cfg.budget_passes);
    if let Some(t) = cfg.target_subopt {
        budget = budget.with_target(t);
    }
    if let Some(r) = cfg.restarts {
        budget = budget.with_restarts(r);
    }
    let ctrl = RunControl::new(budget, fstar);
    let step = |default_c: f64| 1.0 / (cfg.step_const.unwrap_or(default_c) * p.lipschitz());
    let out = match s {
        Solver::SsAccSvrg => ss_acc_svrg(p, &accelerated_params(p, cfg)?, &ctrl)?,
        Solver::AsAccSvrg => as_acc_svrg_async(p, &accelerated_params(p, cfg)?, cfg.threads, &ctrl)?,
        Solver::Svrg => svrg_serial(p, Some(step(4.0)), cfg.m, cfg.seed, &ctrl)?,
        Solver::Kromagnon => kromagnon_async(p, Some(cfg.step_const.unwrap_or(2.0)), cfg.m, cfg.threads, cfg.seed, &ctrl)?,
        Solver::Saga => saga_serial(p, Some(step(3.0)), cfg.seed, &ctrl)?,
        Solver::Asaga => asaga_async(p, Some(step(3.0)), cfg.threads, cfg.seed, &ctrl)?,
        Solver::Katyusha => {
            let dense = p.with_regularizer(s.regularizer());
            katyusha_lagged(&dense, &KatyushaParams::defaults(&dense, cfg.m, cfg.seed), &ctrl)?
        }
        Solver::SsAccSvrgLagged => {
            let dense = p.with_regularizer(s.regularizer());
            ss_acc_svrg_lagged(&dense, &accelerated_params(p, cfg)?, &ctrl)?
        }
    };
    Ok(out)
}
