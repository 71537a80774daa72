use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use super::{check_workers, run_workers};
use crate::error::{Result, SolverError};
use crate::objective::{logistic_derivative, Problem};
use crate::rng::{self, worker_stream};
use crate::serial::{saga_direction, SagaState};
use crate::shared::SharedVector;
use crate::trace::{Monitor, RunControl, SolverOutput};

/// Shared ASAGA state: iterate, per-sample memory and the data part of the
/// stored average gradient.
#[derive(Debug)]
pub struct SharedSaga {
    pub x: SharedVector,
    pub alpha: SharedVector,
    pub gbar: SharedVector,
}

impl SharedSaga {
    pub fn at(p: &Problem, x: &[f64]) -> Self {
        let s = SagaState::at(p, x);
        Self { x: SharedVector::from_slice(x), alpha: SharedVector::from_slice(&s.alpha), gbar: SharedVector::from_slice(&s.gbar) }
    }
}

/// A memory write: sample, the values read on its support, stored value.
#[derive(Debug, Clone, PartialEq)]
pub struct AsagaWrite {
    pub sample: usize,
    pub read: Vec<f64>,
    pub value: f64,
}

/// Memory-table audit: every stored scalar must be `l'_i` at some point that
/// was actually read (or the initial fill).
#[derive(Debug, Clone)]
pub struct AsagaAudit {
    pub initial: Vec<f64>,
    pub writes: Vec<AsagaWrite>,
}

impl AsagaAudit {
    pub fn verify(&self, p: &Problem, memory: &[f64]) -> std::result::Result<(), String> {
        let ds = p.dataset();
        for w in &self.writes {
            let r = ds.row(w.sample);
            let t: f64 = r.values.iter().zip(&w.read).fold(0.0, |s, (a, x)| s + a * x);
            let expect = logistic_derivative(ds.label(w.sample), t);
            if expect.to_bits() != w.value.to_bits() {
                return Err(format!("sample {}: stored {} but l' at read point is {}", w.sample, w.value, expect));
            }
        }
        for (i, &a) in memory.iter().enumerate() {
            let ok = a.to_bits() == self.initial[i].to_bits()
                || self.writes.iter().any(|w| w.sample == i && w.value.to_bits() == a.to_bits());
            if !ok {
                return Err(format!("sample {i}: memory value {a} was never written"));
            }
        }
        Ok(())
    }
}

/// `n` ASAGA iterations on `workers` threads. Returns the write log when
/// `audit` is set.
pub fn asaga_epoch(
    p: &Problem,
    state: &SharedSaga,
    gamma: f64,
    workers: usize,
    seed: u64,
    epoch: u64,
    audit: bool,
) -> Result<Option<Vec<AsagaWrite>>> {
    check_workers(workers)?;
    let ds = p.dataset();
    let n = p.n();
    let nf = n as f64;
    let dd = &p.profile().d_diag;
    let mu = p.mu();
    let counter = AtomicUsize::new(0);
    let logs = run_workers(workers, |w| {
        let mut sampler = rng::stream(seed, epoch, worker_stream(w));
        let mut xbuf = Vec::new();
        let mut log = audit.then(Vec::new);
        while counter.fetch_add(1, Ordering::Relaxed) < n {
            let i = sampler.gen_range(0..n);
            let r = ds.row(i);
            state.x.inconsistent_read_into(r.indices, &mut xbuf);
            let mut t = 0.0;
            for (&a, &x) in r.values.iter().zip(&xbuf) {
                t += a * x;
            }
            let new = logistic_derivative(ds.label(i), t);
            let old = state.alpha.swap(i, new);
            let diff = new - old;
            for ((&v, &a), &x) in r.indices.iter().zip(r.values).zip(&xbuf) {
                let g = saga_direction(diff, a, dd[v], state.gbar.load(v), mu, x);
                state.x.add(v, -(gamma * g));
                state.gbar.add(v, diff * a / nf);
            }
            if let Some(l) = log.as_mut() {
                l.push(AsagaWrite { sample: i, read: xbuf.clone(), value: new });
            }
        }
        log
    })?;
    Ok(audit.then(|| logs.into_iter().flatten().flatten().collect()))
}

/// ASAGA with step `1/(3L)` by default; one trace row per `n` iterations.
pub fn asaga_async(p: &Problem, step: Option<f64>, workers: usize, seed: u64, ctrl: &RunControl) -> Result<SolverOutput> {
    p.require_sparse()?;
    check_workers(workers)?;
    let gamma = step.unwrap_or(1.0 / (3.0 * p.lipschitz()));
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(SolverError::InvalidParam(format!("step must be >= 0, got {gamma}")));
    }
    let x0 = ctrl.start_point(p)?;
    let mut mon = Monitor::new(p, ctrl, &x0)?;
    if let Some(stop) = mon.exhausted_at_start() {
        return Ok(mon.finish(x0, stop, None));
    }
    let state = SharedSaga::at(p, &x0);
    mon.count_evals(p.n());
    let mut epoch = 0u64;
    loop {
        asaga_epoch(p, &state, gamma, workers, seed, epoch, false)?;
        mon.count_evals(p.n());
        epoch += 1;
        let x = state.x.to_vec();
        if let Some(stop) = mon.epoch_done(epoch as usize, &x)? {
            return Ok(mon.finish(x, stop, None));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_random_sparse, normalize_rows};
    use crate::objective::{full_gradient, Regularizer, Smoothness};
    use crate::serial::saga_serial;
    use crate::trace::Budget;

    fn problem(seed: u64) -> Problem {
        let ds = normalize_rows(&gen_random_sparse(150, 60, 0.08, 0.1, seed)).unwrap();
        Problem::new(&ds, 1e-2, Regularizer::Sparse, Smoothness::Safe).unwrap()
    }

    #[test]
    fn single_worker_matches_serial_saga() {
        let p = problem(1);
        let ctrl = RunControl::new(Budget::passes(12.0), 0.0);
        let a = asaga_async(&p, None, 1, 3, &ctrl).unwrap();
        let s = saga_serial(&p, None, 3, &ctrl).unwrap();
        assert_eq!(a.x, s.x);
    }

    #[test]
    fn memory_audit_holds_under_concurrency() {
        let p = problem(2);
        let x0 = vec![0.0; p.d()];
        let state = SharedSaga::at(&p, &x0);
        let initial = state.alpha.to_vec();
        let gamma = 1.0 / (3.0 * p.lipschitz());
        let mut writes = Vec::new();
        for e in 0..3 {
            writes.extend(asaga_epoch(&p, &state, gamma, 4, 7, e, true).unwrap().unwrap());
        }
        assert_eq!(writes.len(), 3 * p.n());
        let audit = AsagaAudit { initial, writes };
        audit.verify(&p, &state.alpha.to_vec()).unwrap();
    }

    #[test]
    fn converges_with_four_workers() {
        let p = problem(3);
        let out = asaga_async(&p, None, 4, 1, &RunControl::new(Budget::passes(300.0), 0.0)).unwrap();
        let g = full_gradient(&p, &out.x).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
    }
}
