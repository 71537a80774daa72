//! Run budgets, convergence traces and the shared epoch-level monitor.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::objective::{loss_value, Problem};

/// Suboptimality growth (relative to the start) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// When to stop. Checked at epoch boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_passes: f64,
    pub target_subopt: Option<f64>,
    pub max_restarts: Option<usize>,
    pub max_epochs: Option<usize>,
    /// Stop once `||grad f(x~)||` at a snapshot falls below this.
    pub grad_tol: Option<f64>,
}

impl Budget {
    pub fn passes(max_passes: f64) -> Self {
        Self { max_passes, target_subopt: None, max_restarts: None, max_epochs: None, grad_tol: None }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target_subopt = Some(target);
        self
    }

    pub fn with_restarts(mut self, r: usize) -> Self {
        self.max_restarts = Some(r);
        self
    }

    pub fn with_epochs(mut self, e: usize) -> Self {
        self.max_epochs = Some(e);
        self
    }

    pub fn with_grad_tol(mut self, tol: f64) -> Self {
        self.grad_tol = Some(tol);
        self
    }
}

impl Default for Budget {
    fn default() -> Self {
        Self::passes(100.0)
    }
}

/// Everything a solver run needs besides the problem and its parameters.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    pub budget: Budget,
    /// Reference optimum; traces report `f(x) - fstar`.
    pub fstar: f64,
    /// Starting point, zero when absent.
    pub x0: Option<Vec<f64>>,
    /// Keep a copy of every snapshot (for trajectory comparisons).
    pub keep_snapshots: bool,
}

impl RunControl {
    pub fn new(budget: Budget, fstar: f64) -> Self {
        Self { budget, fstar, x0: None, keep_snapshots: false }
    }

    pub fn keep_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }

    pub(crate) fn start_point(&self, p: &Problem) -> Result<Vec<f64>> {
        match &self.x0 {
            None => Ok(vec![0.0; p.d()]),
            Some(x) if x.len() == p.d() => Ok(x.clone()),
            Some(x) => Err(SolverError::DimensionMismatch { expected: p.d(), got: x.len() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub epoch: usize,
    pub effective_passes: f64,
    pub wall_time: f64,
    pub suboptimality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    PassBudget,
    Target,
    Restarts,
    Epochs,
    GradTol,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    /// Last evaluated point (latest snapshot or restart point).
    pub x: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    /// `f(x_r) - fstar` for every restart point, starting with `x_0`.
    pub restart_suboptimality: Vec<f64>,
    /// Snapshots in order, if requested.
    pub snapshots: Vec<Vec<f64>>,
    pub stop: StopReason,
    /// Largest observed iteration overlap (asynchronous runs only).
    pub observed_tau: Option<usize>,
}

impl SolverOutput {
    pub fn final_suboptimality(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.suboptimality)
    }

    /// First effective-pass count at which the trace reaches `target`.
    pub fn passes_to(&self, target: f64) -> Option<f64> {
        self.trace.iter().find(|r| r.suboptimality <= target).map(|r| r.effective_passes)
    }

    pub fn time_to(&self, target: f64) -> Option<f64> {
        self.trace.iter().find(|r| r.suboptimality <= target).map(|r| r.wall_time)
    }

    pub fn best_objective(&self, fstar: f64) -> f64 {
        self.trace.iter().map(|r| r.suboptimality).fold(f64::INFINITY, f64::min) + fstar
    }
}

/// Clock that excludes monitoring work (objective evaluations).
pub(crate) struct Stopwatch {
    start: Instant,
    paused: Duration,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self { start: Instant::now(), paused: Duration::ZERO }
    }

    pub fn elapsed(&self) -> f64 {
        (self.start.elapsed() - self.paused).as_secs_f64()
    }

    pub fn excluding<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.paused += t.elapsed();
        out
    }
}

/// Epoch-level bookkeeping shared by all solvers.
pub(crate) struct Monitor<'a> {
    problem: &'a Problem,
    ctrl: &'a RunControl,
    clock: Stopwatch,
    evals: u128,
    initial: f64,
    restart: usize,
    epochs_done: usize,
    pub trace: Vec<TraceRecord>,
    pub restart_subopt: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
}

impl<'a> Monitor<'a> {
    pub fn new(problem: &'a Problem, ctrl: &'a RunControl, x0: &[f64]) -> Result<Self> {
        let mut clock = Stopwatch::start();
        let f0 = clock.excluding(|| loss_value(problem, x0))?;
        let initial = f0 - ctrl.fstar;
        let mut m = Self {
            problem,
            ctrl,
            clock,
            evals: 0,
            initial,
            restart: 0,
            epochs_done: 0,
            trace: Vec::new(),
            restart_subopt: vec![initial],
            snapshots: Vec::new(),
        };
        m.trace.push(TraceRecord { restart: 0, epoch: 0, effective_passes: 0.0, wall_time: 0.0, suboptimality: initial });
        Ok(m)
    }

    pub fn count_evals(&mut self, evals: usize) {
        self.evals += evals as u128;
    }

    pub fn passes(&self) -> f64 {
        self.evals as f64 / self.problem.n() as f64
    }

    /// Record the snapshot produced by epoch `epoch` (1-based) of the current
    /// restart and decide whether to stop.
    pub fn epoch_done(&mut self, epoch: usize, x: &[f64]) -> Result<Option<StopReason>> {
        let f = self.clock.excluding(|| loss_value(self.problem, x))?;
        let subopt = f - self.ctrl.fstar;
        let rec = TraceRecord {
            restart: self.restart,
            epoch,
            effective_passes: self.passes(),
            wall_time: self.clock.elapsed(),
            suboptimality: subopt,
        };
        self.trace.push(rec);
        self.epochs_done += 1;
        if self.ctrl.keep_snapshots {
            self.snapshots.push(x.to_vec());
        }
        self.check_divergence(epoch, subopt)?;
        Ok(self.stop_reason(subopt))
    }

    /// Record a restart point `x_{r+1}`.
    pub fn restart_done(&mut self, x: &[f64]) -> Result<Option<StopReason>> {
        let f = self.clock.excluding(|| loss_value(self.problem, x))?;
        let subopt = f - self.ctrl.fstar;
        self.restart_subopt.push(subopt);
        self.restart += 1;
        self.check_divergence(0, subopt)?;
        if let Some(r) = self.ctrl.budget.max_restarts {
            if self.restart >= r {
                return Ok(Some(StopReason::Restarts));
            }
        }
        Ok(None)
    }

    pub fn restart_index(&self) -> usize {
        self.restart
    }

    pub fn grad_check(&self, grad_norm: f64) -> Option<StopReason> {
        match self.ctrl.budget.grad_tol {
            Some(tol) if grad_norm <= tol => Some(StopReason::GradTol),
            _ => None,
        }
    }

    fn check_divergence(&self, epoch: usize, subopt: f64) -> Result<()> {
        let limit = DIVERGENCE_FACTOR * self.initial.abs().max(1e-12);
        if !subopt.is_finite() || subopt > limit {
            return Err(SolverError::Diverged {
                restart: self.restart,
                epoch,
                suboptimality: subopt,
                initial: self.initial,
            });
        }
        Ok(())
    }

    fn stop_reason(&self, subopt: f64) -> Option<StopReason> {
        let b = &self.ctrl.budget;
        if let Some(t) = b.target_subopt {
            if subopt <= t {
                return Some(StopReason::Target);
            }
        }
        if let Some(e) = b.max_epochs {
            if self.epochs_done >= e {
                return Some(StopReason::Epochs);
            }
        }
        if self.passes() >= b.max_passes {
            return Some(StopReason::PassBudget);
        }
        None
    }

    /// Stop before any work if the budget is already exhausted.
    pub fn exhausted_at_start(&self) -> Option<StopReason> {
        let b = &self.ctrl.budget;
        if b.max_passes <= 0.0 {
            return Some(StopReason::PassBudget);
        }
        if b.max_epochs == Some(0) {
            return Some(StopReason::Epochs);
        }
        if b.max_restarts == Some(0) {
            return Some(StopReason::Restarts);
        }
        match b.target_subopt {
            Some(t) if self.initial <= t => Some(StopReason::Target),
            _ => None,
        }
    }

    pub fn finish(self, x: Vec<f64>, stop: StopReason, observed_tau: Option<usize>) -> SolverOutput {
        SolverOutput {
            x,
            trace: self.trace,
            restart_suboptimality: self.restart_subopt,
            snapshots: self.snapshots,
            stop,
            observed_tau,
        }
    }
}
