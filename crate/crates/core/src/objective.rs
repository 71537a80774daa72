//! Sparsified l2-regularized logistic regression.
//!
//! Sample `i` contributes `f_i(x) = log(1 + exp(-b_i <a_i, x>)) + (mu/2) <x, D_i x>`
//! where `D_i = P_i D`, so `f_i` is supported on `T_i` and the `f_i` still
//! average to the plain `(mu/2) ||x||^2` regularizer. The dense mode replaces
//! the sparsified term by `(mu/2) ||x||^2` in every `f_i`.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::dataset::{compute_support_profile, Row, SparseDataset, SupportProfile};
use crate::error::{Result, SolverError};

static NEXT_PROBLEM_ID: AtomicU64 = AtomicU64::new(1);

/// How the l2 term is split across samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// `(mu/2) <x, D_i x>` per sample, keeping `f_i` supported on `T_i`.
    Sparse,
    /// `(mu/2) ||x||^2` per sample (lagged-update baselines).
    Dense,
}

/// Choice of the smoothness constant `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothness {
    /// Largest per-sample constant, valid for the sparsified `f_i`.
    Safe,
    /// `0.25 max_i ||a_i||^2 + mu`, the constant of the unsparsified samples.
    Nominal,
    Value(f64),
}

impl std::str::FromStr for Smoothness {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "safe" => Ok(Smoothness::Safe),
            "nominal" => Ok(Smoothness::Nominal),
            other => other
                .parse::<f64>()
                .map(Smoothness::Value)
                .map_err(|_| format!("expected safe, nominal or a number, got {other:?}")),
        }
    }
}

/// Numerically stable `log(1 + exp(z))`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of `t -> log(1 + exp(-b t))`, i.e. `-b * sigmoid(-b t)`.
#[inline]
pub fn logistic_derivative(b: f64, t: f64) -> f64 {
    -b * sigmoid(-b * t)
}

/// An optimization instance: compacted dataset, support profile and constants.
#[derive(Debug, Clone)]
pub struct Problem {
    id: u64,
    dataset: SparseDataset,
    profile: SupportProfile,
    mu: f64,
    lipschitz: f64,
    regularizer: Regularizer,
}

impl Problem {
    /// Compacts unused coordinates and fixes `L` from `smoothness`.
    pub fn new(dataset: &SparseDataset, mu: f64, regularizer: Regularizer, smoothness: Smoothness) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(SolverError::InvalidParam(format!("mu must be finite and >= 0, got {mu}")));
        }
        let (dataset, profile) = compute_support_profile(dataset);
        let lipschitz = match smoothness {
            Smoothness::Safe => smoothness_constant(&dataset, &profile, mu, regularizer),
            Smoothness::Nominal => nominal_smoothness(&dataset, mu),
            Smoothness::Value(l) => l,
        };
        if !(lipschitz > 0.0 && lipschitz >= mu) {
            return Err(SolverError::InvalidParam(format!("L = {lipschitz} must be positive and >= mu = {mu}")));
        }
        Ok(Self {
            id: NEXT_PROBLEM_ID.fetch_add(1, Ordering::Relaxed),
            dataset,
            profile,
            mu,
            lipschitz,
            regularizer,
        })
    }

    /// Same data and constants with a different regularizer split.
    pub fn with_regularizer(&self, regularizer: Regularizer) -> Self {
        let mut p = self.clone();
        p.regularizer = regularizer;
        p.id = NEXT_PROBLEM_ID.fetch_add(1, Ordering::Relaxed);
        p
    }

    /// Same data with `mu` replaced; `L` is recomputed with `smoothness`.
    pub fn with_mu(&self, mu: f64, smoothness: Smoothness) -> Result<Self> {
        Self::new(&self.dataset, mu, self.regularizer, smoothness)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dataset(&self) -> &SparseDataset {
        &self.dataset
    }

    pub fn profile(&self) -> &SupportProfile {
        &self.profile
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn d(&self) -> usize {
        self.dataset.d()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    /// `L / mu`, infinite when `mu == 0`.
    pub fn kappa(&self) -> f64 {
        if self.mu == 0.0 {
            f64::INFINITY
        } else {
            self.lipschitz / self.mu
        }
    }

    /// Largest per-sample smoothness constant for the current regularizer.
    pub fn safe_smoothness(&self) -> f64 {
        smoothness_constant(&self.dataset, &self.profile, self.mu, self.regularizer)
    }

    #[inline]
    pub(crate) fn reg_weight(&self, v: usize) -> f64 {
        match self.regularizer {
            Regularizer::Sparse => self.profile.d_diag[v],
            Regularizer::Dense => 1.0,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(SolverError::DimensionMismatch { expected: self.d(), got: x.len() });
        }
        Ok(())
    }

    fn check_sample(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(SolverError::SampleOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    pub(crate) fn require_sparse(&self) -> Result<()> {
        if self.regularizer != Regularizer::Sparse {
            return Err(SolverError::InvalidParam(
                "sparse solvers need the sparsified regularizer".into(),
            ));
        }
        Ok(())
    }
}

/// `max_i [0.25 ||a_i||^2 + mu * w_i]` with `w_i = max_{v in T_i} D_vv`
/// (sparse) or `1` (dense).
pub fn smoothness_constant(ds: &SparseDataset, profile: &SupportProfile, mu: f64, reg: Regularizer) -> f64 {
    let mut best: f64 = 0.0;
    for r in ds.rows() {
        let w = match reg {
            Regularizer::Sparse => r.indices.iter().map(|&v| profile.d_diag[v]).fold(0.0, f64::max),
            Regularizer::Dense => 1.0,
        };
        best = best.max(0.25 * r.norm_sq() + mu * w);
    }
    best
}

pub fn nominal_smoothness(ds: &SparseDataset, mu: f64) -> f64 {
    0.25 * ds.rows().map(|r| r.norm_sq()).fold(0.0, f64::max) + mu
}

/// Objective value `f(x)`.
pub fn loss_value(p: &Problem, x: &[f64]) -> Result<f64> {
    p.check_dim(x)?;
    let ds = p.dataset();
    let mut s = 0.0;
    for (r, &b) in ds.rows().zip(ds.labels()) {
        s += softplus(-b * r.dot(x));
    }
    let sq: f64 = x.iter().map(|v| v * v).sum();
    Ok(s / p.n() as f64 + 0.5 * p.mu * sq)
}

/// `f_i(x)` for a dense `x`.
pub fn sample_loss(p: &Problem, i: usize, x: &[f64]) -> Result<f64> {
    p.check_dim(x)?;
    p.check_sample(i)?;
    let r = p.dataset.row(i);
    let data = softplus(-p.dataset.label(i) * r.dot(x));
    let reg = match p.regularizer {
        Regularizer::Sparse => r.indices.iter().map(|&v| p.profile.d_diag[v] * x[v] * x[v]).sum::<f64>(),
        Regularizer::Dense => x.iter().map(|v| v * v).sum(),
    };
    Ok(data + 0.5 * p.mu * reg)
}

/// `grad f_i(x)` as a dense vector.
pub fn sample_gradient_dense(p: &Problem, i: usize, x: &[f64]) -> Result<Vec<f64>> {
    p.check_dim(x)?;
    p.check_sample(i)?;
    let r = p.dataset.row(i);
    let dl = logistic_derivative(p.dataset.label(i), r.dot(x));
    let mut g = match p.regularizer {
        Regularizer::Sparse => vec![0.0; p.d()],
        Regularizer::Dense => x.iter().map(|v| p.mu * v).collect(),
    };
    for (&v, &a) in r.indices.iter().zip(r.values) {
        g[v] += dl * a;
        if p.regularizer == Regularizer::Sparse {
            g[v] += p.mu * p.profile.d_diag[v] * x[v];
        }
    }
    Ok(g)
}

/// Adds `l'_i(<a_i, x>) a_i` for samples in `range` into `acc` and stores the
/// scalar derivatives into `dloss` (indexed from `range.start`).
pub(crate) fn accumulate_data_gradient(p: &Problem, x: &[f64], range: Range<usize>, acc: &mut [f64], dloss: &mut [f64]) {
    let ds = p.dataset();
    let start = range.start;
    for i in range {
        let r = ds.row(i);
        let dl = logistic_derivative(ds.label(i), r.dot(x));
        dloss[i - start] = dl;
        for (&v, &a) in r.indices.iter().zip(r.values) {
            acc[v] += dl * a;
        }
    }
}

/// `acc / n + mu x`.
pub(crate) fn finish_gradient(p: &Problem, x: &[f64], mut acc: Vec<f64>) -> Vec<f64> {
    let n = p.n() as f64;
    for (g, &xv) in acc.iter_mut().zip(x) {
        *g = *g / n + p.mu * xv;
    }
    acc
}

/// `grad f(x) = (1/n) sum_i l'_i a_i + mu x`.
pub fn full_gradient(p: &Problem, x: &[f64]) -> Result<Vec<f64>> {
    p.check_dim(x)?;
    let mut acc = vec![0.0; p.d()];
    let mut dl = vec![0.0; p.n()];
    accumulate_data_gradient(p, x, 0..p.n(), &mut acc, &mut dl);
    Ok(finish_gradient(p, x, acc))
}

/// Gradient entries on a sample's support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseGradient {
    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (&v, &g) in self.support.iter().zip(&self.values) {
            out[v] = g;
        }
        out
    }
}

/// `[grad f_i(x)]_{T_i}` from the values of `x` on `T_i`.
pub fn partial_gradient(p: &Problem, i: usize, x_t: &[f64]) -> Result<SparseGradient> {
    p.check_sample(i)?;
    let r = p.dataset.row(i);
    if x_t.len() != r.len() {
        return Err(SolverError::DimensionMismatch { expected: r.len(), got: x_t.len() });
    }
    let t: f64 = r.values.iter().zip(x_t).map(|(a, x)| a * x).sum();
    let dl = logistic_derivative(p.dataset.label(i), t);
    let values = r
        .indices
        .iter()
        .zip(r.values)
        .zip(x_t)
        .map(|((&v, &a), &x)| dl * a + p.mu * p.reg_weight(v) * x)
        .collect();
    Ok(SparseGradient { support: r.indices.to_vec(), values })
}

/// Per-epoch snapshot data: `x~`, `g~ = grad f(x~)`, `D g~` and the per-sample
/// derivatives `l'_i(<a_i, x~>)`.
#[derive(Debug, Clone)]
pub struct SnapshotContext {
    problem_id: u64,
    pub x_tilde: Vec<f64>,
    pub grad: Vec<f64>,
    pub dgrad: Vec<f64>,
    pub dloss: Vec<f64>,
}

impl SnapshotContext {
    pub fn new(p: &Problem, x_tilde: Vec<f64>) -> Result<Self> {
        p.check_dim(&x_tilde)?;
        let mut acc = vec![0.0; p.d()];
        let mut dloss = vec![0.0; p.n()];
        accumulate_data_gradient(p, &x_tilde, 0..p.n(), &mut acc, &mut dloss);
        let grad = finish_gradient(p, &x_tilde, acc);
        Ok(Self::from_parts(p, x_tilde, grad, dloss))
    }

    pub(crate) fn from_parts(p: &Problem, x_tilde: Vec<f64>, grad: Vec<f64>, dloss: Vec<f64>) -> Self {
        let dgrad = grad.iter().zip(&p.profile.d_diag).map(|(g, dv)| g * dv).collect();
        Self { problem_id: p.id, x_tilde, grad, dgrad, dloss }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn check(&self, p: &Problem) -> Result<()> {
        if self.problem_id != p.id {
            return Err(SolverError::StaleSnapshot);
        }
        Ok(())
    }
}

/// Writes `G = grad f_i(y) - grad f_i(x~) + D_i g~` on `T_i` into `out`, where
/// `y` holds the values on `T_i`. Shared by every SVRG-type solver.
#[inline]
pub(crate) fn estimator_into(p: &Problem, snap: &SnapshotContext, i: usize, row: Row<'_>, y: &[f64], out: &mut [f64]) {
    let mut t = 0.0;
    for (&a, &yv) in row.values.iter().zip(y) {
        t += a * yv;
    }
    let ddl = logistic_derivative(p.dataset.label(i), t) - snap.dloss[i];
    let mu = p.mu;
    let dd = &p.profile.d_diag;
    for k in 0..row.len() {
        let v = row.indices[k];
        out[k] = ddl * row.values[k] + mu * dd[v] * (y[k] - snap.x_tilde[v]) + snap.dgrad[v];
    }
}

/// The sparse SVRG estimator on `T_i`, with `y_t` the values of `y` on `T_i`.
pub fn sparse_svrg_estimator(p: &Problem, i: usize, y_t: &[f64], snap: &SnapshotContext) -> Result<SparseGradient> {
    snap.check(p)?;
    p.check_sample(i)?;
    p.require_sparse()?;
    let row = p.dataset.row(i);
    if y_t.len() != row.len() {
        return Err(SolverError::DimensionMismatch { expected: row.len(), got: y_t.len() });
    }
    let mut values = vec![0.0; row.len()];
    estimator_into(p, snap, i, row, y_t, &mut values);
    Ok(SparseGradient { support: row.indices.to_vec(), values })
}

/// Coupling step `y = theta z + (1 - theta) x~ - phi D g~`, evaluated
/// coordinate-wise with a fixed operation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub theta: f64,
    pub one_minus_theta: f64,
    pub phi: f64,
    pub eta: f64,
}

impl Coupling {
    pub fn new(theta: f64, phi: f64, eta: f64) -> Self {
        Self { theta, one_minus_theta: 1.0 - theta, phi, eta }
    }

    #[inline]
    pub fn point(&self, z: f64, x_tilde: f64, dgrad: f64) -> f64 {
        self.theta * z + self.one_minus_theta * x_tilde - self.phi * dgrad
    }

    /// Dense `y` from a dense `z`.
    pub fn dense_point(&self, z: &[f64], snap: &SnapshotContext) -> Vec<f64> {
        z.iter()
            .zip(&snap.x_tilde)
            .zip(&snap.dgrad)
            .map(|((&zv, &xv), &gv)| self.point(zv, xv, gv))
            .collect()
    }
}

/// Convenience for tests and the harness: `G` embedded as a dense vector.
pub fn estimator_dense(p: &Problem, i: usize, y: &[f64], snap: &SnapshotContext) -> Result<Vec<f64>> {
    let row = p.dataset.row(i);
    let y_t: Vec<f64> = row.indices.iter().map(|&v| y[v]).collect();
    Ok(sparse_svrg_estimator(p, i, &y_t, snap)?.to_dense(p.d()))
}
