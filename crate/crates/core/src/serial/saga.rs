use rand::Rng;

use crate::error::{Result, SolverError};
use crate::objective::{logistic_derivative, Problem};
use crate::rng::{self, worker_stream};
use crate::trace::{Monitor, RunControl, SolverOutput};

/// SAGA memory for a GLM: one scalar `alpha_i = l'_i` per sample and the
/// data part of the stored average gradient `gbar = (1/n) sum_j alpha_j a_j`.
#[derive(Debug, Clone)]
pub struct SagaState {
    pub alpha: Vec<f64>,
    pub gbar: Vec<f64>,
}

impl SagaState {
    /// Memory filled at `x` (one full pass).
    pub fn at(p: &Problem, x: &[f64]) -> Self {
        let ds = p.dataset();
        let nf = p.n() as f64;
        let mut alpha = Vec::with_capacity(p.n());
        let mut gbar = vec![0.0; p.d()];
        for i in 0..p.n() {
            let r = ds.row(i);
            let dl = logistic_derivative(ds.label(i), r.dot(x));
            alpha.push(dl);
            for (&v, &a) in r.indices.iter().zip(r.values) {
                gbar[v] += dl * a;
            }
        }
        for g in &mut gbar {
            *g /= nf;
        }
        Self { alpha, gbar }
    }

    /// The SAGA direction for sample `i` at `x` embedded densely, without
    /// touching the memory.
    pub fn direction_dense(&self, p: &Problem, i: usize, x: &[f64]) -> Vec<f64> {
        let ds = p.dataset();
        let r = ds.row(i);
        let diff = logistic_derivative(ds.label(i), r.dot(x)) - self.alpha[i];
        let mut out = vec![0.0; p.d()];
        for (&v, &a) in r.indices.iter().zip(r.values) {
            out[v] = saga_direction(diff, a, p.profile().d_diag[v], self.gbar[v], p.mu(), x[v]);
        }
        out
    }
}

/// `(l'_new - alpha_i) a_iv + D_v gbar_v + mu D_v x_v`.
#[inline]
pub(crate) fn saga_direction(diff: f64, a: f64, dv: f64, gbar: f64, mu: f64, x: f64) -> f64 {
    diff * a + dv * gbar + mu * dv * x
}

/// Sparse SAGA with step `1/(3L)` by default. Memory is initialized at `x_0`
/// with one full pass; each iteration costs one gradient evaluation. A trace
/// row is written every `n` iterations.
pub fn saga_serial(p: &Problem, step: Option<f64>, seed: u64, ctrl: &RunControl) -> Result<SolverOutput> {
    p.require_sparse()?;
    let gamma = step.unwrap_or(1.0 / (3.0 * p.lipschitz()));
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(SolverError::InvalidParam(format!("step must be >= 0, got {gamma}")));
    }
    let mut x = ctrl.start_point(p)?;
    let mut mon = Monitor::new(p, ctrl, &x)?;
    if let Some(stop) = mon.exhausted_at_start() {
        return Ok(mon.finish(x, stop, None));
    }
    let ds = p.dataset();
    let n = p.n();
    let nf = n as f64;
    let dd = &p.profile().d_diag;
    let mu = p.mu();
    let mut state = SagaState::at(p, &x);
    mon.count_evals(n);
    let mut epoch = 0u64;
    loop {
        let mut sampler = rng::stream(seed, epoch, worker_stream(0));
        for _ in 0..n {
            let i = sampler.gen_range(0..n);
            let r = ds.row(i);
            let new = logistic_derivative(ds.label(i), r.dot(&x));
            let old = std::mem::replace(&mut state.alpha[i], new);
            let diff = new - old;
            for (&v, &a) in r.indices.iter().zip(r.values) {
                let g = saga_direction(diff, a, dd[v], state.gbar[v], mu, x[v]);
                x[v] += -(gamma * g);
                state.gbar[v] += diff * a / nf;
            }
        }
        mon.count_evals(n);
        epoch += 1;
        if let Some(stop) = mon.epoch_done(epoch as usize, &x)? {
            return Ok(mon.finish(x, stop, None));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_dense, gen_random_sparse, normalize_rows};
    use crate::objective::{full_gradient, sample_gradient_dense, Regularizer, Smoothness};
    use crate::trace::Budget;

    fn problem(seed: u64) -> Problem {
        let ds = normalize_rows(&gen_random_sparse(20, 10, 0.3, 0.1, seed)).unwrap();
        Problem::new(&ds, 0.05, Regularizer::Sparse, Smoothness::Safe).unwrap()
    }

    #[test]
    fn memory_matches_per_sample_gradients() {
        let p = problem(1);
        let x: Vec<f64> = (0..p.d()).map(|v| 0.1 * v as f64 - 0.3).collect();
        let s = SagaState::at(&p, &x);
        let ds = p.dataset();
        for i in 0..p.n() {
            let r = ds.row(i);
            assert_eq!(s.alpha[i], logistic_derivative(ds.label(i), r.dot(&x)));
        }
        // gbar + mu x is the full gradient when the memory is fresh.
        let g = full_gradient(&p, &x).unwrap();
        for v in 0..p.d() {
            assert!((s.gbar[v] + p.mu() * x[v] - g[v]).abs() < 1e-14);
        }
    }

    #[test]
    fn direction_is_unbiased_by_enumeration() {
        let p = problem(2);
        let stale: Vec<f64> = (0..p.d()).map(|v| (v as f64).sin()).collect();
        let s = SagaState::at(&p, &stale);
        let x: Vec<f64> = (0..p.d()).map(|v| 0.2 * (v as f64).cos()).collect();
        let mut mean = vec![0.0; p.d()];
        for i in 0..p.n() {
            let g = s.direction_dense(&p, i, &x);
            for v in 0..p.d() {
                mean[v] += g[v] / p.n() as f64;
            }
        }
        let full = full_gradient(&p, &x).unwrap();
        for v in 0..p.d() {
            assert!((mean[v] - full[v]).abs() < 1e-12, "{} vs {}", mean[v], full[v]);
        }
    }

    #[test]
    fn dense_data_is_textbook_saga() {
        let ds = normalize_rows(&gen_dense(15, 4, 3)).unwrap();
        let p = Problem::new(&ds, 0.1, Regularizer::Sparse, Smoothness::Safe).unwrap();
        let s = SagaState::at(&p, &vec![0.5; 4]);
        let x = vec![0.1, -0.2, 0.3, 0.0];
        let i = 7;
        let mut textbook = sample_gradient_dense(&p, i, &x).unwrap();
        let old = sample_gradient_dense(&p, i, &[0.5; 4]).unwrap();
        for v in 0..4 {
            // grad f_i(x) - (stored data gradient of i) + stored average.
            textbook[v] -= old[v] - p.mu() * 0.5;
            textbook[v] += s.gbar[v];
        }
        let g = s.direction_dense(&p, i, &x);
        for v in 0..4 {
            assert!((g[v] - textbook[v]).abs() < 1e-14);
        }
    }

    #[test]
    fn converges() {
        let p = problem(3);
        let out = saga_serial(&p, None, 5, &RunControl::new(Budget::passes(400.0), 0.0)).unwrap();
        let g = full_gradient(&p, &out.x).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
        assert!((out.trace[1].effective_passes - 2.0).abs() < 1e-12);
    }
}
