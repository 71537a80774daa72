//! Serial solvers: SS-Acc-SVRG with sparse variance correction and restarts,
//! plain sparse SVRG, sparse SAGA and the lagged-update dense baselines.
//!
//! All SVRG-type solvers share one restart/epoch driver. An epoch engine
//! receives the snapshot context and the dense `z`, runs `m` inner iterations
//! and returns the next snapshot. The asynchronous engine plugs into the same
//! driver.

mod acc_svrg;
mod lagged;
mod saga;

pub use acc_svrg::{acc_epoch, ss_acc_svrg, ss_acc_svrg_with_rule, svrg_serial, EpochResult, EpochSpec, SnapshotRule};
pub use lagged::{katyusha_lagged, ss_acc_svrg_lagged, KatyushaParams};
pub(crate) use saga::saga_direction;
pub use saga::{saga_serial, SagaState};

use crate::error::Result;
use crate::objective::{Problem, SnapshotContext};
use crate::params::{SolverParams, NO_RESTARTS};
use crate::trace::{Monitor, RunControl, SolverOutput, StopReason};

/// One epoch of an SVRG-type method.
pub(crate) trait EpochEngine {
    fn snapshot(&mut self, p: &Problem, x_tilde: Vec<f64>) -> Result<SnapshotContext> {
        SnapshotContext::new(p, x_tilde)
    }

    /// Run one epoch from `z`, leaving the epoch-final `z` in place and
    /// returning the next snapshot. `epoch` is the global epoch counter used
    /// for seed splitting.
    fn epoch(&mut self, p: &Problem, snap: &SnapshotContext, z: &mut Vec<f64>, epoch: u64) -> Result<Vec<f64>>;

    fn observed_tau(&self) -> Option<usize> {
        None
    }
}

/// Restart loop: `x~_0 = z = x_r`, `S` epochs, `x_{r+1}` = mean of the `S`
/// snapshots. Effective passes count `n + 2m` gradient evaluations per epoch.
pub(crate) fn drive<E: EpochEngine>(
    p: &Problem,
    params: &SolverParams,
    ctrl: &RunControl,
    engine: &mut E,
) -> Result<SolverOutput> {
    params.validate()?;
    let x0 = ctrl.start_point(p)?;
    let mut mon = Monitor::new(p, ctrl, &x0)?;
    if let Some(stop) = mon.exhausted_at_start() {
        return Ok(mon.finish(x0, stop, engine.observed_tau()));
    }
    let n = p.n();
    let d = p.d();
    let s_len = params.epochs_per_restart;
    let averaging = s_len != NO_RESTARTS;
    let mut x_r = x0;
    let mut epoch_index = 0u64;
    loop {
        let mut z = x_r.clone();
        let mut x_tilde = x_r.clone();
        let mut sum = if averaging { vec![0.0; d] } else { Vec::new() };
        let mut s = 0;
        while s < s_len {
            let snap = engine.snapshot(p, x_tilde)?;
            mon.count_evals(n);
            if let Some(stop) = mon.grad_check(snap.grad_norm()) {
                let tau = engine.observed_tau();
                return Ok(mon.finish(snap.x_tilde, stop, tau));
            }
            let next = engine.epoch(p, &snap, &mut z, epoch_index)?;
            epoch_index += 1;
            mon.count_evals(2 * params.m);
            if averaging {
                for (acc, &v) in sum.iter_mut().zip(&next) {
                    *acc += v;
                }
            }
            let stop = mon.epoch_done(s + 1, &next)?;
            x_tilde = next;
            if let Some(stop) = stop {
                let tau = engine.observed_tau();
                return Ok(mon.finish(x_tilde, stop, tau));
            }
            s += 1;
        }
        let inv = 1.0 / s_len as f64;
        x_r = sum.into_iter().map(|v| v * inv).collect();
        let mut stop = mon.restart_done(&x_r)?;
        if let Some(r) = params.restarts {
            if mon.restart_index() >= r {
                stop = Some(StopReason::Restarts);
            }
        }
        if let Some(stop) = stop {
            let tau = engine.observed_tau();
            return Ok(mon.finish(x_r, stop, tau));
        }
    }
}
