//! Lagged-update implementations of dense SS-Acc-SVRG and Katyusha.
//!
//! With a dense regularizer, an untouched coordinate evolves by a linear
//! recurrence whose coefficients do not depend on the coordinate. The state of
//! coordinate `v` is a 4-vector of offsets from `x~_v` (plus the constant
//! `g~_v`); a coordinate that sat out `k` iterations is caught up by
//! multiplying with `M^k`, assembled from precomputed `M^(2^b)`. Touched
//! coordinates additionally receive `delta a_iv kick`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{drive, EpochEngine};
use crate::error::{Result, SolverError};
use crate::objective::{logistic_derivative, Problem, Regularizer, SnapshotContext};
use crate::params::{SolverParams, NO_RESTARTS};
use crate::rng::{self, worker_stream, CONTROL_STREAM};
use crate::trace::{RunControl, SolverOutput};

const N: usize = 4;
type State = [f64; N];
type Mat = [[f64; N]; N];

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut c = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            c[i][j] = (0..N).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

#[inline]
fn apply(a: &Mat, s: &State) -> State {
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = a[i][0] * s[0] + a[i][1] * s[1] + a[i][2] * s[2] + a[i][3] * s[3];
    }
    out
}

#[inline]
fn dot(a: &State, s: &State) -> f64 {
    a[0] * s[0] + a[1] * s[1] + a[2] * s[2] + a[3] * s[3]
}

/// Per-coordinate linear dynamics of one dense method. The last state
/// component always holds `g~_v`.
#[derive(Debug, Clone)]
struct Scheme {
    step: Mat,
    kick: State,
    /// Gradient evaluation point is `x~_v + point . s`.
    point: State,
    /// Next snapshot is `x~_v + snapshot . s` after `m` iterations.
    snapshot: State,
    /// Components that are offsets of a carried iterate; the rest reset to 0.
    carried: [bool; N],
    powers: Vec<Mat>,
}

impl Scheme {
    fn with_powers(mut self, m: usize) -> Self {
        let bits = (usize::BITS - m.leading_zeros()) as usize;
        let mut pw = Vec::with_capacity(bits.max(1));
        pw.push(self.step);
        for b in 1..bits.max(1) {
            let prev = pw[b - 1];
            pw.push(mat_mul(&prev, &prev));
        }
        self.powers = pw;
        self
    }

    #[inline]
    fn advance(&self, s: &mut State, mut k: usize) {
        let mut b = 0;
        while k != 0 {
            if k & 1 == 1 {
                *s = apply(&self.powers[b], s);
            }
            k >>= 1;
            b += 1;
        }
    }
}

/// One lazily-updated dense epoch. `carried[v]` holds the offsets of the
/// carried iterates relative to `x~` on entry and is updated on exit.
fn lagged_epoch(
    p: &Problem,
    snap: &SnapshotContext,
    scheme: &Scheme,
    carried: &mut [State],
    m: usize,
    seed: u64,
    epoch: u64,
) -> Vec<f64> {
    let ds = p.dataset();
    let n = p.n();
    let d = p.d();
    // Same stream layout as the sparse solvers; the control draw is unused.
    let _ = rng::stream(seed, epoch, CONTROL_STREAM).gen_range(0..m);
    let mut sampler = rng::stream(seed, epoch, worker_stream(0));
    let mut state: Vec<State> = (0..d)
        .map(|v| {
            let mut s = [0.0; N];
            for c in 0..N - 1 {
                if scheme.carried[c] {
                    s[c] = carried[v][c];
                }
            }
            s[N - 1] = snap.grad[v];
            s
        })
        .collect();
    let mut last = vec![0usize; d];
    for k in 0..m {
        let i = sampler.gen_range(0..n);
        let row = ds.row(i);
        let mut t = 0.0;
        for (&v, &a) in row.indices.iter().zip(row.values) {
            scheme.advance(&mut state[v], k - last[v]);
            t += a * (snap.x_tilde[v] + dot(&scheme.point, &state[v]));
        }
        let delta = logistic_derivative(ds.label(i), t) - snap.dloss[i];
        for (&v, &a) in row.indices.iter().zip(row.values) {
            let mut s = apply(&scheme.step, &state[v]);
            let da = delta * a;
            for c in 0..N {
                s[c] += da * scheme.kick[c];
            }
            state[v] = s;
            last[v] = k + 1;
        }
    }
    let mut next = Vec::with_capacity(d);
    for v in 0..d {
        scheme.advance(&mut state[v], m - last[v]);
        next.push(snap.x_tilde[v] + dot(&scheme.snapshot, &state[v]));
    }
    // Re-express carried iterates relative to the new snapshot.
    for v in 0..d {
        for c in 0..N - 1 {
            if scheme.carried[c] {
                carried[v][c] = (snap.x_tilde[v] + state[v][c]) - next[v];
            }
        }
    }
    next
}

fn require_dense(p: &Problem) -> Result<()> {
    if p.regularizer() != Regularizer::Dense {
        return Err(SolverError::InvalidParam("lagged baselines need the dense-regularizer objective".into()));
    }
    Ok(())
}

struct LaggedEngine {
    scheme: Scheme,
    m: usize,
    seed: u64,
    /// Offsets of carried iterates relative to the current snapshot; `None`
    /// until the first epoch (all iterates start at `x~`).
    carried: Option<Vec<State>>,
    /// Component of the state that is `z`.
    z_component: usize,
}

impl EpochEngine for LaggedEngine {
    fn epoch(&mut self, p: &Problem, snap: &SnapshotContext, z: &mut Vec<f64>, epoch: u64) -> Result<Vec<f64>> {
        let d = p.d();
        let carried = self.carried.get_or_insert_with(|| vec![[0.0; N]; d]);
        // The driver owns z (it resets z at restarts); sync it in both ways.
        for v in 0..d {
            carried[v][self.z_component] = z[v] - snap.x_tilde[v];
        }
        let next = lagged_epoch(p, snap, &self.scheme, carried, self.m, self.seed, epoch);
        for v in 0..d {
            z[v] = next[v] + carried[v][self.z_component];
        }
        Ok(next)
    }
}

/// Dense SS-Acc-SVRG with lagged updates and the averaged snapshot
/// `x~_{s+1} = (1/m) sum_k y_k`.
///
/// Per untouched iteration, with `w = z_v - x~_v`, `U` the running sum of `w`:
/// `w' = (1 - eta mu theta) w - eta (1 - mu phi) g`, `U' = U + w`.
pub fn ss_acc_svrg_lagged(p: &Problem, params: &SolverParams, ctrl: &RunControl) -> Result<SolverOutput> {
    require_dense(p)?;
    let (th, ph, et, mu) = (params.theta, params.phi, params.eta, p.mu());
    let m = params.m;
    let scheme = Scheme {
        step: [
            [1.0 - et * mu * th, 0.0, 0.0, -et * (1.0 - mu * ph)],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        kick: [-et, 0.0, 0.0, 0.0],
        point: [th, 0.0, 0.0, -ph],
        snapshot: [0.0, th / m as f64, 0.0, -ph],
        carried: [true, false, false, false],
        powers: Vec::new(),
    }
    .with_powers(m);
    let mut engine = LaggedEngine { scheme, m, seed: params.seed, carried: None, z_component: 0 };
    drive(p, params, ctrl, &mut engine)
}

/// Katyusha constants (no restarts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatyushaParams {
    pub m: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl KatyushaParams {
    /// `tau2 = 1/2`, `tau1 = min(sqrt(m / (3 kappa)), 1/2)`,
    /// `alpha = 1 / (3 tau1 L)`, `m = 2n`.
    pub fn defaults(p: &Problem, m: Option<usize>, seed: u64) -> Self {
        let m = m.unwrap_or(2 * p.n());
        let tau1 = (m as f64 / (3.0 * p.kappa())).sqrt().min(0.5);
        Self { m, tau1, tau2: 0.5, alpha: 1.0 / (3.0 * tau1 * p.lipschitz()), seed }
    }
}

/// Katyusha with lagged updates. Per iteration, densely:
/// `x = tau1 z + tau2 x~ + (1 - tau1 - tau2) y`, `z -= alpha G`,
/// `y = x - G / (3L)`; the snapshot is the `(1 + alpha mu)^j`-weighted mean of
/// the `y` iterates.
///
/// State `[z - x~, y - x~, T, g]` with `T' = (T + (y' - x~)) / beta`, so that
/// the weighted mean is `x~ + T_m beta^m (beta - 1) / (beta^m - 1)`.
pub fn katyusha_lagged(p: &Problem, kp: &KatyushaParams, ctrl: &RunControl) -> Result<SolverOutput> {
    require_dense(p)?;
    if !(kp.tau1 > 0.0 && kp.tau2 >= 0.0 && kp.tau1 + kp.tau2 <= 1.0 && kp.alpha >= 0.0 && kp.m >= 1) {
        return Err(SolverError::InvalidParam(format!("invalid Katyusha constants {kp:?}")));
    }
    let (t1, t2, al, mu) = (kp.tau1, kp.tau2, kp.alpha, p.mu());
    let t3 = 1.0 - t1 - t2;
    let h = 1.0 / (3.0 * p.lipschitz());
    let am = al * mu;
    let beta = 1.0 + am;
    let m = kp.m;
    let weight = if am == 0.0 { 1.0 / m as f64 } else { am / -(-(m as f64) * am.ln_1p()).exp_m1() };
    // q = t1 wz + t3 wy, G = mu q + g (+ delta a).
    let wy_row = [(1.0 - h * mu) * t1, (1.0 - h * mu) * t3, 0.0, -h];
    let scheme = Scheme {
        step: [
            [1.0 - al * mu * t1, -al * mu * t3, 0.0, -al],
            wy_row,
            [wy_row[0] / beta, wy_row[1] / beta, 1.0 / beta, wy_row[3] / beta],
            [0.0, 0.0, 0.0, 1.0],
        ],
        kick: [-al, -h, -h / beta, 0.0],
        point: [t1, t3, 0.0, 0.0],
        snapshot: [0.0, 0.0, weight, 0.0],
        carried: [true, true, false, false],
        powers: Vec::new(),
    }
    .with_powers(m);
    let params = SolverParams {
        m,
        omega: 2.0,
        theta: 1.0,
        phi: 0.0,
        eta: al,
        epochs_per_restart: NO_RESTARTS,
        restarts: None,
        tau_tilde: 0.0,
        seed: kp.seed,
        lipschitz: p.lipschitz(),
        kappa: p.kappa(),
    };
    let mut engine = LaggedEngine { scheme, m, seed: kp.seed, carried: None, z_component: 0 };
    drive(p, &params, ctrl, &mut engine)
}
