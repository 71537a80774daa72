//! Lock-free asynchronous solvers: AS-Acc-SVRG, KroMagnon and ASAGA.
//!
//! Each epoch runs on scoped worker threads; spawning and joining are the
//! epoch barriers. Inside an epoch workers claim iterations from a shared
//! counter (stop at `k >= m`), read `z` on `T_i` coordinate by coordinate and
//! add their update with per-coordinate atomic adds. Worker `w` samples from
//! stream `w + 1` of the epoch, so a single worker reproduces the serial
//! solvers bit for bit.

mod asaga;

pub use asaga::{asaga_async, asaga_epoch, AsagaAudit, AsagaWrite, SharedSaga};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Result, SolverError};
use crate::objective::{accumulate_data_gradient, estimator_into, finish_gradient, Coupling, Problem, SnapshotContext};
use crate::params::SolverParams;
use crate::rng::{self, worker_stream, CONTROL_STREAM};
use crate::serial::{drive, EpochEngine};
use crate::shared::SharedVector;
use crate::trace::{RunControl, SolverOutput};

pub(crate) fn check_workers(workers: usize) -> Result<()> {
    if workers == 0 {
        return Err(SolverError::InvalidParam("workers must be >= 1".into()));
    }
    Ok(())
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs `f(w)` on `workers` scoped threads and collects the results in worker
/// order. A panicking worker becomes [`SolverError::WorkerPanic`].
pub(crate) fn run_workers<T: Send>(workers: usize, f: impl Fn(usize) -> T + Sync) -> Result<Vec<T>> {
    if workers == 1 {
        return Ok(vec![f(0)]);
    }
    std::thread::scope(|sc| {
        let f = &f;
        let handles: Vec<_> = (0..workers).map(|w| sc.spawn(move || f(w))).collect();
        let mut out = Vec::with_capacity(workers);
        let mut failure = None;
        for (w, h) in handles.into_iter().enumerate() {
            match h.join() {
                Ok(v) => out.push(v),
                Err(e) => failure = Some(SolverError::WorkerPanic(format!("worker {w}: {}", panic_message(e)))),
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    })
}

/// `grad f(x)` with samples split into contiguous per-worker chunks; partial
/// sums are reduced in worker order. Also returns the per-sample `l'_i(x)`.
pub fn parallel_full_gradient(p: &Problem, x: &[f64], workers: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_workers(workers)?;
    if x.len() != p.d() {
        return Err(SolverError::DimensionMismatch { expected: p.d(), got: x.len() });
    }
    let n = p.n();
    let chunk = n.div_ceil(workers);
    let parts = run_workers(workers, |w| {
        let start = (w * chunk).min(n);
        let end = ((w + 1) * chunk).min(n);
        let mut acc = vec![0.0; p.d()];
        let mut dl = vec![0.0; end - start];
        accumulate_data_gradient(p, x, start..end, &mut acc, &mut dl);
        (acc, dl)
    })?;
    let mut it = parts.into_iter();
    let (mut acc, mut dloss) = it.next().expect("workers >= 1");
    for (a, dl) in it {
        for (t, v) in acc.iter_mut().zip(a) {
            *t += v;
        }
        dloss.extend(dl);
    }
    Ok((finish_gradient(p, x, acc), dloss))
}

/// One coordinate add issued by iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub k: usize,
    pub coord: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncEpochSpec {
    pub m: usize,
    pub seed: u64,
    pub epoch: u64,
    pub workers: usize,
    pub log_updates: bool,
}

#[derive(Debug, Clone)]
pub struct AsyncEpochOutcome {
    pub snapshot: Vec<f64>,
    pub chosen_t: usize,
    /// Iterations whose fetched counter value was `< m`.
    pub contributing: usize,
    /// Counter value after the epoch (`m + workers`).
    pub final_counter: usize,
    /// Largest number of iterations claimed while one was in flight.
    pub observed_tau: usize,
    pub updates: Option<Vec<UpdateRecord>>,
}

struct WorkerReport {
    contributing: usize,
    tau: usize,
    updates: Option<Vec<UpdateRecord>>,
}

/// One asynchronous epoch on the shared `z`.
///
/// The worker that claims `k == chosen_t` loads all of `z` and densifies
/// `y_t` before applying its own update.
pub fn async_epoch(
    p: &Problem,
    snap: &SnapshotContext,
    coupling: Coupling,
    z: &SharedVector,
    spec: &AsyncEpochSpec,
) -> Result<AsyncEpochOutcome> {
    snap.check(p)?;
    p.require_sparse()?;
    check_workers(spec.workers)?;
    if z.len() != p.d() {
        return Err(SolverError::DimensionMismatch { expected: p.d(), got: z.len() });
    }
    if spec.m == 0 {
        return Err(SolverError::InvalidParam("m must be >= 1".into()));
    }
    let m = spec.m;
    let n = p.n();
    let ds = p.dataset();
    let chosen_t = rng::stream(spec.seed, spec.epoch, CONTROL_STREAM).gen_range(0..m);
    let counter = AtomicUsize::new(0);
    let captured: OnceLock<Vec<f64>> = OnceLock::new();
    let reports = run_workers(spec.workers, |w| {
        let mut sampler = rng::stream(spec.seed, spec.epoch, worker_stream(w));
        let mut zbuf = Vec::new();
        let mut ybuf = Vec::new();
        let mut gbuf = Vec::new();
        let mut rep = WorkerReport { contributing: 0, tau: 0, updates: spec.log_updates.then(Vec::new) };
        loop {
            let k = counter.fetch_add(1, Ordering::Relaxed);
            if k >= m {
                break;
            }
            if k == chosen_t {
                let full = z.to_vec();
                let _ = captured.set(coupling.dense_point(&full, snap));
            }
            let i = sampler.gen_range(0..n);
            let row = ds.row(i);
            z.inconsistent_read_into(row.indices, &mut zbuf);
            ybuf.clear();
            ybuf.extend(
                row.indices.iter().zip(&zbuf).map(|(&v, &zv)| coupling.point(zv, snap.x_tilde[v], snap.dgrad[v])),
            );
            gbuf.resize(row.len(), 0.0);
            estimator_into(p, snap, i, row, &ybuf, &mut gbuf);
            for (&v, &g) in row.indices.iter().zip(&gbuf) {
                let delta = -(coupling.eta * g);
                z.add(v, delta);
                if let Some(log) = rep.updates.as_mut() {
                    log.push(UpdateRecord { k, coord: v, delta });
                }
            }
            rep.contributing += 1;
            let now = counter.load(Ordering::Relaxed).min(m);
            rep.tau = rep.tau.max(now.saturating_sub(k + 1));
        }
        rep
    })?;
    let snapshot = captured.into_inner().expect("iteration chosen_t always runs");
    let mut out = AsyncEpochOutcome {
        snapshot,
        chosen_t,
        contributing: 0,
        final_counter: counter.into_inner(),
        observed_tau: 0,
        updates: spec.log_updates.then(Vec::new),
    };
    for r in reports {
        out.contributing += r.contributing;
        out.observed_tau = out.observed_tau.max(r.tau);
        if let (Some(all), Some(mine)) = (out.updates.as_mut(), r.updates) {
            all.extend(mine);
        }
    }
    Ok(out)
}

struct AsyncEngine {
    coupling: Coupling,
    m: usize,
    seed: u64,
    workers: usize,
    shared: SharedVector,
    tau: Option<usize>,
}

impl EpochEngine for AsyncEngine {
    fn snapshot(&mut self, p: &Problem, x_tilde: Vec<f64>) -> Result<SnapshotContext> {
        let (grad, dloss) = parallel_full_gradient(p, &x_tilde, self.workers)?;
        Ok(SnapshotContext::from_parts(p, x_tilde, grad, dloss))
    }

    fn epoch(&mut self, p: &Problem, snap: &SnapshotContext, z: &mut Vec<f64>, epoch: u64) -> Result<Vec<f64>> {
        self.shared.copy_from(z);
        let spec = AsyncEpochSpec { m: self.m, seed: self.seed, epoch, workers: self.workers, log_updates: false };
        let out = async_epoch(p, snap, self.coupling, &self.shared, &spec)?;
        for (v, zv) in z.iter_mut().enumerate() {
            *zv = self.shared.load(v);
        }
        self.tau = Some(self.tau.unwrap_or(0).max(out.observed_tau));
        Ok(out.snapshot)
    }

    fn observed_tau(&self) -> Option<usize> {
        self.tau
    }
}

/// AS-Acc-SVRG on `workers` threads with the schedule in `params`
/// (typically from `derive_params_async`).
pub fn as_acc_svrg_async(p: &Problem, params: &SolverParams, workers: usize, ctrl: &RunControl) -> Result<SolverOutput> {
    p.require_sparse()?;
    check_workers(workers)?;
    let mut engine = AsyncEngine {
        coupling: Coupling::new(params.theta, params.phi, params.eta),
        m: params.m,
        seed: params.seed,
        workers,
        shared: SharedVector::zeros(p.d()),
        tau: None,
    };
    drive(p, params, ctrl, &mut engine)
}

/// KroMagnon: the asynchronous engine without coupling or correction, step
/// `1/(c L)` (default `c = 2`), `m = 2n`.
pub fn kromagnon_async(
    p: &Problem,
    step_const: Option<f64>,
    m: Option<usize>,
    workers: usize,
    seed: u64,
    ctrl: &RunControl,
) -> Result<SolverOutput> {
    let c = step_const.unwrap_or(2.0);
    if !(c > 0.0) {
        return Err(SolverError::InvalidParam(format!("step constant must be > 0, got {c}")));
    }
    let params = SolverParams::unaccelerated(m.unwrap_or(2 * p.n()), 1.0 / (c * p.lipschitz()), p.lipschitz(), p.kappa())
        .with_seed(seed);
    as_acc_svrg_async(p, &params, workers, ctrl)
}
