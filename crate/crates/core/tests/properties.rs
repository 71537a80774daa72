//! Property tests over randomly generated instances.

use accsvrg::asynch::{async_epoch, AsyncEpochSpec};
use accsvrg::dataset::gen_random_sparse;
use accsvrg::harness::{check_unbiasedness, check_variance_bound, simulate_epoch, MaskPolicy, SimulationSpec};
use accsvrg::objective::{estimator_dense, full_gradient, loss_value, sample_gradient_dense, sample_loss, sparse_svrg_estimator};
use accsvrg::serial::{acc_epoch, ss_acc_svrg, EpochSpec, SnapshotRule};
use accsvrg::{
    derive_params_async, derive_params_serial, normalize_rows, Budget, Coupling, Problem, Regularizer, RunControl,
    SharedVector, Smoothness, SnapshotContext,
};
use proptest::prelude::*;

fn instance(n: usize, d: usize, density: f64, mu: f64, seed: u64) -> Problem {
    let ds = normalize_rows(&gen_random_sparse(n, d, density, 0.1, seed)).unwrap();
    Problem::new(&ds, mu, Regularizer::Sparse, Smoothness::Safe).unwrap()
}

fn arb_problem() -> impl Strategy<Value = Problem> {
    (2usize..60, 2usize..25, 0.05f64..0.6, 1e-4f64..1e-1, any::<u64>())
        .prop_map(|(n, d, q, mu, s)| instance(n, d, q, mu, s))
}

fn point(d: usize, seed: u64, scale: f64) -> Vec<f64> {
    (0..d).map(|v| scale * ((v as f64 + 1.0) * 0.913 + seed as f64 * 0.37).sin()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_invariants(n in 1usize..100_000, log_kappa in 0.0f64..9.0, omega in 1.01f64..100.0, l in 0.01f64..10.0) {
        let kappa = 10f64.powf(log_kappa);
        let p = derive_params_serial(n, kappa, l, omega, None).unwrap();
        prop_assert!(p.theta > 0.0 && p.theta < 1.0);
        prop_assert!(p.eta > 0.0 && p.phi > 0.0 && p.epochs_per_restart >= 1);
        prop_assert_eq!(p.m, 2 * n);
        prop_assert!((p.phi - p.eta * p.theta).abs() <= 1e-12 * p.phi);
        prop_assert!((p.phi - (1.0 - p.theta) / l).abs() <= 1e-12 * p.phi);
        let a = derive_params_async(n, kappa, l, omega, 0.5, 0.0, None).unwrap();
        prop_assert_eq!(a.theta, p.theta);
        prop_assert_eq!(a.eta, p.eta);
        prop_assert_eq!(a.epochs_per_restart, p.epochs_per_restart);
    }

    #[test]
    fn problem_constants(p in arb_problem()) {
        prop_assert!(p.lipschitz() >= p.mu());
        prop_assert!(p.kappa() >= 1.0);
    }

    #[test]
    fn estimator_lives_on_the_sample_support(p in arb_problem(), s in any::<u64>()) {
        let snap = SnapshotContext::new(&p, point(p.d(), s, 0.5)).unwrap();
        let y = point(p.d(), s ^ 1, 0.5);
        for i in 0..p.n() {
            let row = p.dataset().row(i);
            let y_t: Vec<f64> = row.indices.iter().map(|&v| y[v]).collect();
            let g = sparse_svrg_estimator(&p, i, &y_t, &snap).unwrap();
            prop_assert_eq!(g.support.as_slice(), row.indices);
            prop_assert_eq!(g.values.len(), row.len());
            let dense = estimator_dense(&p, i, &y, &snap).unwrap();
            prop_assert_eq!(g.to_dense(p.d()), dense);
        }
    }

    #[test]
    fn unbiased_on_random_instances(p in arb_problem(), s in any::<u64>()) {
        let r = check_unbiasedness(&p, &[(point(p.d(), s, 1.0), point(p.d(), s.wrapping_add(7), 1.0))]).unwrap();
        prop_assert!(!r.violated, "{:?}", r);
    }

    #[test]
    fn variance_bound_on_random_instances(p in arb_problem(), s in any::<u64>()) {
        let r = check_variance_bound(&p, 5, s).unwrap();
        prop_assert!(!r.violated, "{:?}", r);
    }

    #[test]
    fn interpolation_condition(p in arb_problem(), s in any::<u64>()) {
        let l = p.lipschitz();
        let x = point(p.d(), s, 2.0);
        let y = point(p.d(), s.wrapping_mul(3), 2.0);
        for i in 0..p.n() {
            let gx = sample_gradient_dense(&p, i, &x).unwrap();
            let gy = sample_gradient_dense(&p, i, &y).unwrap();
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bregman = sample_loss(&p, i, &x).unwrap() - sample_loss(&p, i, &y).unwrap() - dot(&gy, &diff);
            let gd: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(bregman >= gd / (2.0 * l) - 1e-9, "sample {}: {} < {}", i, bregman, gd / (2.0 * l));
        }
    }

    #[test]
    fn gradient_matches_finite_differences(p in arb_problem(), s in any::<u64>()) {
        let x = point(p.d(), s, 1.0);
        let g = full_gradient(&p, &x).unwrap();
        let h = 1e-6;
        for v in 0..p.d() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[v] += h;
            b[v] -= h;
            let fd = (loss_value(&p, &a).unwrap() - loss_value(&p, &b).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[v]).abs() <= 1e-5 * g[v].abs().max(1e-3), "v={}: {} vs {}", v, fd, g[v]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equivalent_update_identity(p in arb_problem(), s in any::<u64>(), m in 1usize..60) {
        let pr = derive_params_serial(p.n(), p.kappa(), p.lipschitz(), 50.0, None).unwrap();
        let c = Coupling::new(pr.theta, pr.phi, pr.eta);
        let snap = SnapshotContext::new(&p, point(p.d(), s, 0.3)).unwrap();
        let mut z = point(p.d(), s ^ 5, 0.3);
        let r = acc_epoch(&p, &snap, c, &mut z.clone(), &EpochSpec { m, seed: s, epoch: 0, rule: SnapshotRule::Random }, true).unwrap();
        for &i in r.samples.as_ref().unwrap() {
            let y = c.dense_point(&z, &snap);
            let g = estimator_dense(&p, i, &y, &snap).unwrap();
            for v in 0..p.d() {
                z[v] -= c.eta * g[v];
            }
            let y_next = c.dense_point(&z, &snap);
            for v in 0..p.d() {
                prop_assert!((y_next[v] - y[v] + c.eta * c.theta * g[v]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn serial_runs_are_deterministic_with_monotone_clocks(p in arb_problem(), s in any::<u64>()) {
        let pr = derive_params_serial(p.n(), p.kappa(), p.lipschitz(), 50.0, None).unwrap().with_seed(s);
        let ctrl = RunControl::new(Budget::passes(15.0), 0.0);
        let a = ss_acc_svrg(&p, &pr, &ctrl).unwrap();
        let b = ss_acc_svrg(&p, &pr, &ctrl).unwrap();
        prop_assert_eq!(&a.x, &b.x);
        let subs = |o: &accsvrg::SolverOutput| o.trace.iter().map(|r| (r.restart, r.epoch, r.effective_passes.to_bits(), r.suboptimality.to_bits())).collect::<Vec<_>>();
        prop_assert_eq!(subs(&a), subs(&b));
        for w in a.trace.windows(2) {
            prop_assert!(w[1].effective_passes >= w[0].effective_passes);
            prop_assert!(w[1].wall_time >= w[0].wall_time);
        }
    }

    #[test]
    fn perturbed_schedule_replays_exactly(p in arb_problem(), s in any::<u64>(), tau in 0usize..30, q in 0.0f64..=1.0, all in any::<bool>()) {
        let pr = derive_params_async(p.n(), p.kappa(), p.lipschitz(), 50.0, p.profile().delta, tau as f64, Some(40)).unwrap();
        let c = Coupling::new(pr.theta, pr.phi, pr.eta);
        let snap = SnapshotContext::new(&p, point(p.d(), s, 0.2)).unwrap();
        let policy = if all { MaskPolicy::AllMissing } else { MaskPolicy::Bernoulli(q) };
        let spec = SimulationSpec { m: 40, coupling: c, tau, policy, seed: s, epoch: 0 };
        let tr = simulate_epoch(&p, &snap, &point(p.d(), s ^ 9, 0.2), &spec).unwrap();
        prop_assert!(tr.replay_check(&p, &snap).is_ok());
        for r in &tr.records {
            for (idx, &v) in r.update.support.iter().enumerate() {
                let dy = r.y_hat[idx] - c.point(r.z[idx], snap.x_tilde[v], snap.dgrad[v]);
                prop_assert!((dy - c.theta * (r.z_hat[idx] - r.z[idx])).abs() <= 1e-14 * (1.0 + r.z_hat[idx].abs()));
            }
        }
    }

    #[test]
    fn async_epoch_boundary_and_sample_count(p in arb_problem(), s in any::<u64>(), workers in 1usize..6, m in 1usize..200) {
        let pr = derive_params_async(p.n(), p.kappa(), p.lipschitz(), 50.0, p.profile().delta, workers as f64, Some(m)).unwrap();
        let c = Coupling::new(pr.theta, pr.phi, pr.eta);
        let x0 = point(p.d(), s, 0.1);
        let snap = SnapshotContext::new(&p, x0.clone()).unwrap();
        let shared = SharedVector::from_slice(&x0);
        let out = async_epoch(&p, &snap, c, &shared, &AsyncEpochSpec { m, seed: s, epoch: 0, workers, log_updates: true }).unwrap();
        prop_assert!(out.contributing >= m && out.contributing < m + workers);
        prop_assert!(out.final_counter <= m + workers);
        prop_assert!(out.chosen_t < m);
        let log = out.updates.unwrap();
        let mut replay = x0;
        let mut count = vec![0usize; p.d()];
        for u in &log {
            prop_assert!(u.k < m);
            replay[u.coord] += u.delta;
            count[u.coord] += 1;
        }
        let z = shared.to_vec();
        for v in 0..p.d() {
            prop_assert!((z[v] - replay[v]).abs() <= 1e-9 * count[v].max(1) as f64);
        }
    }
}
