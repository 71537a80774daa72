//! Verification harness: exact-enumeration and Monte-Carlo checks of the
//! estimator, the variance bound, the overlap inequality, the one-iteration
//! coupling inequality and three-scheme equivalence.
//!
//! Every check returns a [`Report`]. `max_margin` is the largest
//! `observed - allowed` over the checked items, so `violated == max_margin > 0`.

mod schedule;

pub use schedule::{
    simulate_epoch, trial_seed, IterationRecord, MaskEntry, MaskPolicy, ScheduleTrace, SimulationSpec,
};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::asynch::as_acc_svrg_async;
use crate::error::{Result, SolverError};
use crate::objective::{estimator_dense, full_gradient, loss_value, Coupling, Problem, Regularizer, SnapshotContext};
use crate::params::SolverParams;
use crate::rng::StreamRng;
use crate::serial::{ss_acc_svrg, ss_acc_svrg_lagged, ss_acc_svrg_with_rule, SnapshotRule};
use crate::trace::{Budget, RunControl};

/// Largest `n` accepted by the enumeration checks.
pub const MAX_ENUMERATION_N: usize = 500;
/// Fewest trials accepted by the Monte-Carlo overlap check.
pub const MIN_OVERLAP_TRIALS: usize = 100;
pub const UNBIASED_TOL: f64 = 1e-12;
pub const VARIANCE_TOL: f64 = 1e-9;
pub const COUPLING_TOL: f64 = 1e-8;
pub const LAGGED_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub trials: usize,
    pub max_margin: f64,
    pub violated: bool,
    pub worst_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl Report {
    fn from_margins(check: &str, trials: usize, margins: impl IntoIterator<Item = f64>) -> Self {
        let mut worst = None;
        let mut max = f64::NEG_INFINITY;
        for (k, m) in margins.into_iter().enumerate() {
            // NaN margins count as violations.
            if m > max || m.is_nan() {
                max = if m.is_nan() { f64::INFINITY } else { m };
                worst = Some(k);
            }
        }
        Self { check: check.into(), trials, max_margin: max, violated: max > 0.0, worst_k: worst, detail: None }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn require_enumerable(p: &Problem) -> Result<()> {
    if p.n() > MAX_ENUMERATION_N {
        return Err(SolverError::InvalidParam(format!("enumeration checks need n <= {MAX_ENUMERATION_N}, got {}", p.n())));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn uniform_point(rng: &mut StreamRng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

/// Exact `E_i` of the embedded sparse estimator against `grad f(y)` at each
/// `(x~, y)` pair; allowed deviation `1e-12` per coordinate.
pub fn check_unbiasedness(p: &Problem, points: &[(Vec<f64>, Vec<f64>)]) -> Result<Report> {
    require_enumerable(p)?;
    let nf = p.n() as f64;
    let mut margins = Vec::with_capacity(points.len());
    for (x_tilde, y) in points {
        let snap = SnapshotContext::new(p, x_tilde.clone())?;
        let mut mean = vec![0.0; p.d()];
        for i in 0..p.n() {
            let g = estimator_dense(p, i, y, &snap)?;
            for (m, gv) in mean.iter_mut().zip(g) {
                *m += gv / nf;
            }
        }
        let full = full_gradient(p, y)?;
        let dev = mean.iter().zip(&full).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        margins.push(dev - UNBIASED_TOL);
    }
    Ok(Report::from_margins("unbiased", points.len(), margins))
}

/// Exact terms of the variance-bound chain at one `(x~, y)` pair.
#[derive(Debug, Clone, Copy)]
pub struct VarianceTerms {
    /// `E_i ||G_y - grad f(y)||^2`.
    pub variance: f64,
    /// Right side of the bound.
    pub bound: f64,
    /// Largest gap between consecutive equalities of the proof chain.
    pub chain_gap: f64,
}

pub fn variance_terms(p: &Problem, x_tilde: &[f64], y: &[f64]) -> Result<VarianceTerms> {
    let snap = SnapshotContext::new(p, x_tilde.to_vec())?;
    let nf = p.n() as f64;
    let gy = full_gradient(p, y)?;
    let gx = &snap.grad;
    let dg = &snap.dgrad;
    let l = p.safe_smoothness();
    let (mut variance, mut second, mut diff_sq, mut cross_local, mut cross_global, mut local_sq, mut mixed) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..p.n() {
        let g = estimator_dense(p, i, y, &snap)?;
        variance += g.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / nf;
        second += dot(&g, &g) / nf;
        // grad f_i(y) - grad f_i(x~) and D_i g~ on T_i.
        let row = p.dataset().row(i);
        let mut delta = vec![0.0; p.d()];
        let mut dig = vec![0.0; p.d()];
        for &v in row.indices {
            let dgv = dg[v];
            delta[v] = g[v] - dgv;
            dig[v] = dgv;
        }
        diff_sq += dot(&delta, &delta) / nf;
        cross_local += dot(&delta, &dig) / nf;
        cross_global += dot(&delta, dg) / nf;
        local_sq += dot(&dig, &dig) / nf;
        mixed += dot(dg, &dig) / nf;
    }
    let gy_sq = dot(&gy, &gy);
    // (a): variance = E||G||^2 - ||grad f(y)||^2.
    let a = second - gy_sq;
    let expanded = diff_sq + 2.0 * cross_local + local_sq - gy_sq;
    // (b): the D_i terms collapse onto D.
    let b = diff_sq + 2.0 * cross_global + mixed - gy_sq;
    let closed = diff_sq + 2.0 * dot(&gy, dg) - dot(gx, dg) - gy_sq;
    let scale = 1.0 + variance.abs() + second.abs();
    let chain_gap = [variance - a, a - expanded, expanded - b, b - closed]
        .iter()
        .map(|g| g.abs() / scale)
        .fold(0.0, f64::max);
    let breg = loss_value(p, x_tilde)? - loss_value(p, y)? - dot(&gy, &x_tilde.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
    let bound = 2.0 * l * breg - gy_sq + 2.0 * dot(&gy, dg) - dot(gx, dg);
    Ok(VarianceTerms { variance, bound, chain_gap })
}

/// Lemma-style variance bound at `trials` random `(y, x~)` pairs with exact
/// enumeration over `i`; allowed slack `1e-9`. The proof-chain identities
/// must hold to `1e-12` relative.
pub fn check_variance_bound(p: &Problem, trials: usize, seed: u64) -> Result<Report> {
    require_enumerable(p)?;
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(trials);
    let mut worst_chain: f64 = 0.0;
    for _ in 0..trials {
        let x_tilde = uniform_point(&mut rng, p.d(), 1.0);
        let y = uniform_point(&mut rng, p.d(), 1.0);
        let t = variance_terms(p, &x_tilde, &y)?;
        margins.push(t.variance - t.bound - VARIANCE_TOL);
        worst_chain = worst_chain.max(t.chain_gap);
    }
    let mut r = Report::from_margins("variance", trials, margins);
    if worst_chain > 1e-12 {
        r.violated = true;
        r = r.with_detail(format!("proof-chain identity gap {worst_chain:.3e}"));
    }
    Ok(r)
}

/// Per-`k` paired statistics of `LHS_k - RHS_k` across traces.
#[derive(Debug, Clone)]
pub struct OverlapStats {
    delta: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    trials: usize,
}

impl OverlapStats {
    pub fn new(m: usize, delta: f64) -> Self {
        Self { delta, sum: vec![0.0; m], sum_sq: vec![0.0; m], trials: 0 }
    }

    pub fn add(&mut self, trace: &ScheduleTrace) {
        let lhs = trace.inner_products();
        let norms = trace.update_norms_sq();
        let c = self.delta.sqrt() * trace.coupling.eta / 2.0;
        let tau = trace.tau;
        let mut window = 0.0;
        for k in 0..lhs.len() {
            if k > tau {
                window -= norms[k - tau - 1];
            }
            let rhs = c * (window + tau as f64 * norms[k]);
            let diff = lhs[k] - rhs;
            self.sum[k] += diff;
            self.sum_sq[k] += diff * diff;
            window += norms[k];
        }
        self.trials += 1;
    }

    /// Margin per `k`: `mean(LHS - RHS) - 3 SE`.
    pub fn report(&self) -> Result<Report> {
        if self.trials < MIN_OVERLAP_TRIALS {
            return Err(SolverError::InvalidParam(format!(
                "overlap check needs >= {MIN_OVERLAP_TRIALS} trials, got {}",
                self.trials
            )));
        }
        let t = self.trials as f64;
        let margins = self.sum.iter().zip(&self.sum_sq).map(|(&s, &s2)| {
            let mean = s / t;
            let var = ((s2 - t * mean * mean) / (t - 1.0)).max(0.0);
            mean - 3.0 * (var / t).sqrt()
        });
        Ok(Report::from_margins("overlap", self.trials, margins))
    }
}

/// Overlap inequality on already simulated traces (same `m`).
pub fn check_overlap_bound(traces: &[ScheduleTrace], delta: f64) -> Result<Report> {
    let m = traces.first().map_or(0, |t| t.records.len());
    let mut stats = OverlapStats::new(m, delta);
    for t in traces {
        if t.records.len() != m {
            return Err(SolverError::InvalidParam("traces must share the epoch length".into()));
        }
        stats.add(t);
    }
    stats.report()
}

/// Simulates `trials` independent epochs from the same start and checks the
/// overlap inequality with `delta` taken from the problem's support profile.
pub fn overlap_experiment(
    p: &Problem,
    snap: &SnapshotContext,
    z0: &[f64],
    base: &SimulationSpec,
    trials: usize,
) -> Result<Report> {
    let mut stats = OverlapStats::new(base.m, p.profile().delta);
    for trial in 0..trials {
        let spec = SimulationSpec { seed: trial_seed(base.seed, trial as u64), ..*base };
        stats.add(&simulate_epoch(p, snap, z0, &spec)?);
    }
    let mut r = stats.report()?;
    r.detail = Some(format!("tau={} policy={:?}", base.tau.min(base.m), base.policy));
    Ok(r)
}

/// One-iteration inequality of the serial analysis at random `(z, x~)`:
/// `f(y) - f* <= (1 - theta)(f(x~) - f*)
///   + L theta^2 / (2 (1 - theta)) (||z - x*||^2 - E_i ||z - eta G_i - x*||^2)`,
/// exact over `i`, slack `1e-8`. `params` must follow the serial schedule
/// with the safe `L`.
pub fn check_coupling_inequality(
    p: &Problem,
    params: &SolverParams,
    x_star: &[f64],
    f_star: f64,
    trials: usize,
    seed: u64,
) -> Result<Report> {
    require_enumerable(p)?;
    let th = params.theta;
    if !(th < 1.0) {
        return Err(SolverError::InvalidParam("coupling check needs theta < 1".into()));
    }
    let c = Coupling::new(th, params.phi, params.eta);
    let l = params.lipschitz;
    let nf = p.n() as f64;
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x_tilde: Vec<f64> = x_star.iter().zip(uniform_point(&mut rng, p.d(), 0.5)).map(|(a, b)| a + b).collect();
        let z: Vec<f64> = x_star.iter().zip(uniform_point(&mut rng, p.d(), 0.5)).map(|(a, b)| a + b).collect();
        let snap = SnapshotContext::new(p, x_tilde.clone())?;
        let y = c.dense_point(&z, &snap);
        let dist = |u: &[f64]| u.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut next_dist = 0.0;
        for i in 0..p.n() {
            let g = estimator_dense(p, i, &y, &snap)?;
            let zn: Vec<f64> = z.iter().zip(&g).map(|(zv, gv)| zv - c.eta * gv).collect();
            next_dist += dist(&zn) / nf;
        }
        let lhs = loss_value(p, &y)? - f_star;
        let rhs = (1.0 - th) * (loss_value(p, &x_tilde)? - f_star)
            + l * th * th / (2.0 * (1.0 - th)) * (dist(&z) - next_dist);
        margins.push(lhs - rhs - COUPLING_TOL);
    }
    Ok(Report::from_margins("coupling", trials, margins))
}

/// Three-scheme agreement over `epochs` epochs (no restarts): serial
/// SS-Acc-SVRG vs single-worker AS-Acc-SVRG (bit-identical snapshots), and
/// the lagged dense variant vs the averaged-snapshot sparse solver (relative
/// deviation `<= 1e-8`). Meaningful on fully dense data, where both
/// regularizer splits coincide.
pub fn check_equivalence(p: &Problem, params: &SolverParams, epochs: usize) -> Result<Report> {
    let sparse = p.with_regularizer(Regularizer::Sparse);
    let dense = p.with_regularizer(Regularizer::Dense);
    let params = SolverParams { epochs_per_restart: crate::params::NO_RESTARTS, ..params.clone() };
    let ctrl = RunControl::new(Budget::default().with_epochs(epochs), 0.0).keep_snapshots();
    let serial = ss_acc_svrg(&sparse, &params, &ctrl)?;
    let single = as_acc_svrg_async(&sparse, &params, 1, &ctrl)?;
    let identical = serial.snapshots.len() == single.snapshots.len()
        && serial.snapshots.iter().zip(&single.snapshots).all(|(a, b)| a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits()));
    let averaged = ss_acc_svrg_with_rule(&sparse, &params, SnapshotRule::Average, &ctrl)?;
    let lagged = ss_acc_svrg_lagged(&dense, &params, &ctrl)?;
    let per_epoch = averaged.snapshots.iter().zip(&lagged.snapshots).map(|(a, b)| {
        a.iter().zip(b).map(|(u, v)| (u - v).abs() / (1.0 + u.abs())).fold(0.0, f64::max) - LAGGED_TOL
    });
    let mut r = Report::from_margins("equivalence", epochs, per_epoch);
    if averaged.snapshots.len() != lagged.snapshots.len() {
        r.violated = true;
    }
    if !identical {
        r.violated = true;
        r = r.with_detail("single-worker asynchronous run differs from the serial run".into());
    }
    Ok(r)
}
