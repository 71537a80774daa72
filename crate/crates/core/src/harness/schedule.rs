//! Deterministic emulation of one epoch under bounded overlap.
//!
//! Virtual iterates follow `z_{k+1} = z_k - eta G_k`. The read used by
//! iteration `k` is `z^_k = z_k + eta sum_j J_j^k G_j` over the pending
//! updates `j in [(k - tau)+, k)`, where the 0/1 diagonal mask `J_j^k` marks
//! coordinates of update `j` not yet visible to iteration `k`.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::objective::{estimator_into, Coupling, Problem, SnapshotContext, SparseGradient};
use crate::rng::{self, split_seed, worker_stream, CONTROL_STREAM};

/// Stream id for mask draws (disjoint from control and worker streams).
const MASK_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Every pending update visible: `z^_k = z_k`.
    None,
    /// Every pending update entirely missing.
    AllMissing,
    /// Each coordinate of each pending update missing with probability `q`.
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec {
    pub m: usize,
    pub coupling: Coupling,
    pub tau: usize,
    pub policy: MaskPolicy,
    pub seed: u64,
    pub epoch: u64,
}

/// Coordinates of update `j` missing from the read of the current iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEntry {
    pub j: usize,
    pub coords: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub sample: usize,
    pub masks: Vec<MaskEntry>,
    /// `z_k`, `z^_k` and `y^_k` on `T_i`.
    pub z: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub update: SparseGradient,
}

#[derive(Debug, Clone)]
pub struct ScheduleTrace {
    pub tau: usize,
    pub coupling: Coupling,
    pub z0: Vec<f64>,
    pub z_final: Vec<f64>,
    pub chosen_t: usize,
    /// `y^_t` over all coordinates.
    pub snapshot: Vec<f64>,
    pub records: Vec<IterationRecord>,
}

fn lookup(g: &SparseGradient, v: usize) -> Option<f64> {
    g.support.binary_search(&v).ok().map(|k| g.values[k])
}

/// `z_v + eta sum_{masked j} G_j[v]`, summing in increasing `j`; `z_v`
/// itself when no pending update hides `v`.
fn perturbed(z_v: f64, v: usize, eta: f64, masks: &[MaskEntry], records: &[IterationRecord]) -> f64 {
    let mut s = 0.0;
    let mut any = false;
    for e in masks {
        if e.coords.binary_search(&v).is_ok() {
            s += lookup(&records[e.j].update, v).expect("mask lies on update support");
            any = true;
        }
    }
    if any {
        z_v + eta * s
    } else {
        z_v
    }
}

/// One epoch with the serial sample convention (worker-0 stream, control
/// draw for `t`) and masks from a separate stream.
pub fn simulate_epoch(p: &Problem, snap: &SnapshotContext, z0: &[f64], spec: &SimulationSpec) -> Result<ScheduleTrace> {
    snap.check(p)?;
    p.require_sparse()?;
    if z0.len() != p.d() {
        return Err(SolverError::DimensionMismatch { expected: p.d(), got: z0.len() });
    }
    if spec.m == 0 {
        return Err(SolverError::InvalidParam("m must be >= 1".into()));
    }
    if let MaskPolicy::Bernoulli(q) = spec.policy {
        if !(0.0..=1.0).contains(&q) {
            return Err(SolverError::InvalidParam(format!("mask probability must lie in [0, 1], got {q}")));
        }
    }
    let tau = if spec.tau > spec.m {
        warn!("tau = {} exceeds m = {}; clamped", spec.tau, spec.m);
        spec.m
    } else {
        spec.tau
    };
    let c = spec.coupling;
    let ds = p.dataset();
    let n = p.n();
    let chosen_t = rng::stream(spec.seed, spec.epoch, CONTROL_STREAM).gen_range(0..spec.m);
    let mut sampler = rng::stream(spec.seed, spec.epoch, worker_stream(0));
    let mut mask_rng = rng::stream(spec.seed, spec.epoch, MASK_STREAM);
    let mut z = z0.to_vec();
    let mut records: Vec<IterationRecord> = Vec::with_capacity(spec.m);
    let mut snapshot = Vec::new();
    for k in 0..spec.m {
        let mut masks = Vec::new();
        if spec.policy != MaskPolicy::None {
            for j in k.saturating_sub(tau)..k {
                let supp = &records[j].update.support;
                let coords: Vec<usize> = match spec.policy {
                    MaskPolicy::AllMissing => supp.clone(),
                    MaskPolicy::Bernoulli(q) => supp.iter().copied().filter(|_| mask_rng.gen_bool(q)).collect(),
                    MaskPolicy::None => unreachable!(),
                };
                if !coords.is_empty() {
                    masks.push(MaskEntry { j, coords });
                }
            }
        }
        if k == chosen_t {
            let z_hat_full: Vec<f64> =
                z.iter().enumerate().map(|(v, &zv)| perturbed(zv, v, c.eta, &masks, &records)).collect();
            snapshot = c.dense_point(&z_hat_full, snap);
        }
        let i = sampler.gen_range(0..n);
        let row = ds.row(i);
        let z_t: Vec<f64> = row.indices.iter().map(|&v| z[v]).collect();
        let z_hat: Vec<f64> =
            row.indices.iter().zip(&z_t).map(|(&v, &zv)| perturbed(zv, v, c.eta, &masks, &records)).collect();
        let y_hat: Vec<f64> =
            row.indices.iter().zip(&z_hat).map(|(&v, &zv)| c.point(zv, snap.x_tilde[v], snap.dgrad[v])).collect();
        let mut g = vec![0.0; row.len()];
        estimator_into(p, snap, i, row, &y_hat, &mut g);
        for (&v, &gv) in row.indices.iter().zip(&g) {
            z[v] -= c.eta * gv;
        }
        records.push(IterationRecord {
            sample: i,
            masks,
            z: z_t,
            z_hat,
            y_hat,
            update: SparseGradient { support: row.indices.to_vec(), values: g },
        });
    }
    Ok(ScheduleTrace { tau, coupling: c, z0: z0.to_vec(), z_final: z, chosen_t, snapshot, records })
}

impl ScheduleTrace {
    /// Recomputes every stored `z_k`, `z^_k`, `y^_k` from `z0`, the masks and
    /// the stored updates, and checks the mask/support structure. Exact.
    pub fn replay_check(&self, p: &Problem, snap: &SnapshotContext) -> std::result::Result<(), String> {
        let c = self.coupling;
        let mut z = self.z0.clone();
        for (k, r) in self.records.iter().enumerate() {
            let supp = &r.update.support;
            if supp.as_slice() != p.dataset().row(r.sample).indices {
                return Err(format!("k={k}: update support differs from T_i"));
            }
            for e in &r.masks {
                if e.j >= k || e.j + self.tau < k {
                    return Err(format!("k={k}: mask for j={} outside the overlap window", e.j));
                }
                if e.coords.iter().any(|v| self.records[e.j].update.support.binary_search(v).is_err()) {
                    return Err(format!("k={k}: mask for j={} leaves the update support", e.j));
                }
            }
            for (idx, &v) in supp.iter().enumerate() {
                if z[v].to_bits() != r.z[idx].to_bits() {
                    return Err(format!("k={k}: virtual iterate mismatch at {v}"));
                }
                let zh = perturbed(z[v], v, c.eta, &r.masks, &self.records);
                if zh.to_bits() != r.z_hat[idx].to_bits() {
                    return Err(format!("k={k}: perturbed read mismatch at {v}"));
                }
                let yh = c.point(zh, snap.x_tilde[v], snap.dgrad[v]);
                if yh.to_bits() != r.y_hat[idx].to_bits() {
                    return Err(format!("k={k}: coupling mismatch at {v}"));
                }
            }
            for (&v, &g) in supp.iter().zip(&r.update.values) {
                z[v] -= c.eta * g;
            }
        }
        if z != self.z_final {
            return Err("final virtual iterate mismatch".into());
        }
        Ok(())
    }

    /// `<G_k, z^_k - z_k>` for every `k`.
    pub fn inner_products(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.update.values.iter().zip(r.z_hat.iter().zip(&r.z)).map(|(g, (zh, z))| g * (zh - z)).sum())
            .collect()
    }

    /// `||G_k||^2` for every `k`.
    pub fn update_norms_sq(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.update.values.iter().map(|g| g * g).sum()).collect()
    }
}

/// Seed of trial `trial` in a Monte-Carlo run rooted at `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    split_seed(seed, trial, 0x7472_6961_6c73)
}
