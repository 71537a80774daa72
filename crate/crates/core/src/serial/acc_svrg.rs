use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{drive, EpochEngine};
use crate::error::{Result, SolverError};
use crate::objective::{estimator_into, Coupling, Problem, SnapshotContext};
use crate::params::SolverParams;
use crate::rng::{self, worker_stream, CONTROL_STREAM};
use crate::trace::{RunControl, SolverOutput};

/// How the next snapshot is formed from the epoch's `y` sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotRule {
    /// `y_t` for a pre-drawn uniform `t` in `[0, m)`.
    #[default]
    Random,
    /// `(1/m) sum_k y_k`, maintained lazily.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSpec {
    pub m: usize,
    pub seed: u64,
    /// Global epoch counter used for seed splitting.
    pub epoch: u64,
    pub rule: SnapshotRule,
}

#[derive(Debug, Clone)]
pub struct EpochResult {
    pub snapshot: Vec<f64>,
    pub chosen_t: usize,
    /// Sample drawn at each iteration, if recorded.
    pub samples: Option<Vec<usize>>,
}

/// Running mean of `y_k` over the epoch. A coordinate's `y` only changes
/// when it is touched, so it is accumulated as `value x run length`.
struct LazyAverage {
    acc: Vec<f64>,
    last: Vec<usize>,
}

impl LazyAverage {
    fn new(d: usize) -> Self {
        Self { acc: vec![0.0; d], last: vec![0; d] }
    }

    /// `y_T` is the value held on `T_i` through iterations `last..=k`.
    #[inline]
    fn touch(&mut self, support: &[usize], y_t: &[f64], k: usize) {
        for (&v, &y) in support.iter().zip(y_t) {
            self.acc[v] += (k + 1 - self.last[v]) as f64 * y;
            self.last[v] = k + 1;
        }
    }

    fn finish(mut self, z: &[f64], coupling: &Coupling, snap: &SnapshotContext, m: usize) -> Vec<f64> {
        let inv = 1.0 / m as f64;
        for v in 0..z.len() {
            let y = coupling.point(z[v], snap.x_tilde[v], snap.dgrad[v]);
            self.acc[v] += (m - self.last[v]) as f64 * y;
            self.acc[v] *= inv;
        }
        self.acc
    }
}

/// One epoch of the sparse accelerated inner loop, updating `z` in place.
///
/// Iteration `k` draws `i` from the worker-0 stream, forms
/// `y = theta z + (1 - theta) x~ - phi D g~` on `T_i` and applies
/// `z -= eta G`. Under [`SnapshotRule::Random`] the full `y_t` is densified
/// from `z_t` before update `t`.
pub fn acc_epoch(
    p: &Problem,
    snap: &SnapshotContext,
    coupling: Coupling,
    z: &mut [f64],
    spec: &EpochSpec,
    record_samples: bool,
) -> Result<EpochResult> {
    snap.check(p)?;
    p.require_sparse()?;
    if z.len() != p.d() {
        return Err(SolverError::DimensionMismatch { expected: p.d(), got: z.len() });
    }
    if spec.m == 0 {
        return Err(SolverError::InvalidParam("m must be >= 1".into()));
    }
    let ds = p.dataset();
    let n = p.n();
    let chosen_t = rng::stream(spec.seed, spec.epoch, CONTROL_STREAM).gen_range(0..spec.m);
    let mut sampler = rng::stream(spec.seed, spec.epoch, worker_stream(0));
    let mut samples = record_samples.then(|| Vec::with_capacity(spec.m));
    let mut avg = (spec.rule == SnapshotRule::Average).then(|| LazyAverage::new(p.d()));
    let mut captured = None;
    let mut ybuf = Vec::new();
    let mut gbuf = Vec::new();
    for k in 0..spec.m {
        if k == chosen_t && spec.rule == SnapshotRule::Random {
            captured = Some(coupling.dense_point(z, snap));
        }
        let i = sampler.gen_range(0..n);
        if let Some(s) = samples.as_mut() {
            s.push(i);
        }
        let row = ds.row(i);
        ybuf.clear();
        ybuf.extend(row.indices.iter().map(|&v| coupling.point(z[v], snap.x_tilde[v], snap.dgrad[v])));
        if let Some(a) = avg.as_mut() {
            a.touch(row.indices, &ybuf, k);
        }
        gbuf.resize(row.len(), 0.0);
        estimator_into(p, snap, i, row, &ybuf, &mut gbuf);
        for (&v, &g) in row.indices.iter().zip(&gbuf) {
            z[v] -= coupling.eta * g;
        }
    }
    let snapshot = match avg {
        Some(a) => a.finish(z, &coupling, snap, spec.m),
        None => captured.expect("chosen_t < m"),
    };
    Ok(EpochResult { snapshot, chosen_t, samples })
}

struct SerialEngine {
    coupling: Coupling,
    m: usize,
    seed: u64,
    rule: SnapshotRule,
}

impl EpochEngine for SerialEngine {
    fn epoch(&mut self, p: &Problem, snap: &SnapshotContext, z: &mut Vec<f64>, epoch: u64) -> Result<Vec<f64>> {
        let spec = EpochSpec { m: self.m, seed: self.seed, epoch, rule: self.rule };
        Ok(acc_epoch(p, snap, self.coupling, z, &spec, false)?.snapshot)
    }
}

/// SS-Acc-SVRG with the random-snapshot rule.
pub fn ss_acc_svrg(p: &Problem, params: &SolverParams, ctrl: &RunControl) -> Result<SolverOutput> {
    ss_acc_svrg_with_rule(p, params, SnapshotRule::Random, ctrl)
}

pub fn ss_acc_svrg_with_rule(
    p: &Problem,
    params: &SolverParams,
    rule: SnapshotRule,
    ctrl: &RunControl,
) -> Result<SolverOutput> {
    p.require_sparse()?;
    let mut engine = SerialEngine {
        coupling: Coupling::new(params.theta, params.phi, params.eta),
        m: params.m,
        seed: params.seed,
        rule,
    };
    drive(p, params, ctrl, &mut engine)
}

/// Sparse SVRG: step `1/(4L)` and `m = 2n` by default, snapshot a uniformly
/// random inner iterate.
pub fn svrg_serial(
    p: &Problem,
    step: Option<f64>,
    m: Option<usize>,
    seed: u64,
    ctrl: &RunControl,
) -> Result<SolverOutput> {
    let eta = step.unwrap_or(1.0 / (4.0 * p.lipschitz()));
    let params = SolverParams::unaccelerated(m.unwrap_or(2 * p.n()), eta, p.lipschitz(), p.kappa()).with_seed(seed);
    ss_acc_svrg(p, &params, ctrl)
}
