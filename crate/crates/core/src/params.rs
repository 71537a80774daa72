//! Parameter schedules for the accelerated solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

/// `epochs_per_restart` value that disables restarts.
pub const NO_RESTARTS: usize = usize::MAX;

/// Scalars driving SS-Acc-SVRG and AS-Acc-SVRG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Inner iterations per epoch.
    pub m: usize,
    /// Restart-frequency constant, `> 1`.
    pub omega: f64,
    /// Coupling weight on `z`.
    pub theta: f64,
    /// Sparse variance correction coefficient.
    pub phi: f64,
    /// Step size on `z`.
    pub eta: f64,
    /// Epochs per restart (`S`).
    pub epochs_per_restart: usize,
    /// Restart count; `None` means budget-driven.
    pub restarts: Option<usize>,
    /// Overlap estimate used in the schedule (0 for serial).
    pub tau_tilde: f64,
    pub seed: u64,
    pub lipschitz: f64,
    pub kappa: f64,
}

fn check_common(n: usize, kappa: f64, lipschitz: f64, omega: f64) -> Result<()> {
    if n == 0 {
        return Err(SolverError::InvalidParam("n must be >= 1".into()));
    }
    if !(omega > 1.0 && omega.is_finite()) {
        return Err(SolverError::InvalidParam(format!("omega must be > 1, got {omega}")));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(SolverError::InvalidParam(format!("kappa must be finite and positive, got {kappa}")));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(SolverError::InvalidParam(format!("L must be positive, got {lipschitz}")));
    }
    Ok(())
}

/// Serial schedule: `m = 2n` unless overridden,
/// `theta = sqrt(m) / (sqrt(kappa) + sqrt(m))`, `phi = (1 - theta) / L`,
/// `eta = (1 - theta) / (L theta)`, `S = ceil(2 omega sqrt(kappa / m))`.
pub fn derive_params_serial(
    n: usize,
    kappa: f64,
    lipschitz: f64,
    omega: f64,
    m_override: Option<usize>,
) -> Result<SolverParams> {
    check_common(n, kappa, lipschitz, omega)?;
    Ok(schedule(n, kappa, lipschitz, omega, 1.0, 0.0, m_override))
}

/// Asynchronous schedule with `A = 1 + 2 sqrt(delta) tau~`:
/// `theta = sqrt(m) / (sqrt(kappa A) + sqrt(m))`, `phi = (1 - theta) / L`,
/// `eta = (1 - theta) / (L theta A)`, `S = ceil(2 omega sqrt(kappa A / m))`.
pub fn derive_params_async(
    n: usize,
    kappa: f64,
    lipschitz: f64,
    omega: f64,
    delta: f64,
    tau_tilde: f64,
    m_override: Option<usize>,
) -> Result<SolverParams> {
    check_common(n, kappa, lipschitz, omega)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(SolverError::InvalidParam(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(tau_tilde >= 0.0 && tau_tilde.is_finite()) {
        return Err(SolverError::InvalidParam(format!("tau~ must be >= 0, got {tau_tilde}")));
    }
    let a = 1.0 + 2.0 * delta.sqrt() * tau_tilde;
    Ok(schedule(n, kappa, lipschitz, omega, a, tau_tilde, m_override))
}

fn schedule(n: usize, kappa: f64, l: f64, omega: f64, a: f64, tau_tilde: f64, m_override: Option<usize>) -> SolverParams {
    let m = m_override.unwrap_or(2 * n).max(1);
    let sm = (m as f64).sqrt();
    let ka = kappa * a;
    let theta = sm / (ka.sqrt() + sm);
    let phi = (1.0 - theta) / l;
    let eta = (1.0 - theta) / (l * theta * a);
    let s = (2.0 * omega * (ka / m as f64).sqrt()).ceil().max(1.0) as usize;
    SolverParams {
        m,
        omega,
        theta,
        phi,
        eta,
        epochs_per_restart: s,
        restarts: None,
        tau_tilde,
        seed: 0,
        lipschitz: l,
        kappa,
    }
}

/// Number of restarts guaranteeing a `1/omega` contraction down to `eps`.
pub fn restarts_needed(initial_gap: f64, eps: f64, omega: f64) -> usize {
    if initial_gap <= eps {
        return 0;
    }
    ((initial_gap / eps).ln() / omega.ln()).ceil() as usize
}

impl SolverParams {
    /// Plain (unaccelerated) sparse SVRG on the same engine: `theta = 1`,
    /// `phi = 0`, no restarts.
    pub fn unaccelerated(m: usize, eta: f64, lipschitz: f64, kappa: f64) -> Self {
        SolverParams {
            m,
            omega: 2.0,
            theta: 1.0,
            phi: 0.0,
            eta,
            epochs_per_restart: NO_RESTARTS,
            restarts: None,
            tau_tilde: 0.0,
            seed: 0,
            lipschitz,
            kappa,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Drop the sparse variance correction (ablation).
    pub fn without_correction(mut self) -> Self {
        self.phi = 0.0;
        self
    }

    /// Checks the ranges any run accepts. `theta = 1`, `phi = 0` and
    /// `eta = 0` are allowed here for the degenerate and ablation variants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SolverError::InvalidParam(m));
        if self.m == 0 {
            return bad("m must be >= 1".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return bad(format!("phi must be >= 0, got {}", self.phi));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be >= 0, got {}", self.eta));
        }
        if self.epochs_per_restart == 0 {
            return bad("S must be >= 1".into());
        }
        if !(self.omega > 1.0) {
            return bad(format!("omega must be > 1, got {}", self.omega));
        }
        Ok(())
    }

    /// `phi == eta theta A == (1 - theta) / L` within `tol` relative.
    pub fn is_theory_consistent(&self, delta: f64, tol: f64) -> bool {
        let a = 1.0 + 2.0 * delta.sqrt() * self.tau_tilde;
        let target = (1.0 - self.theta) / self.lipschitz;
        let close = |x: f64, y: f64| (x - y).abs() <= tol * y.abs().max(f64::MIN_POSITIVE);
        self.theta > 0.0 && self.theta < 1.0 && close(self.phi, target) && close(self.eta * self.theta * a, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_equals_m() {
        let l = 2.0;
        let p = derive_params_serial(50, 100.0, l, 3.0, None).unwrap();
        assert_eq!(p.m, 100);
        assert!((p.theta - 0.5).abs() < 1e-15);
        assert!((p.eta - 1.0 / l).abs() < 1e-15);
        assert!((p.phi - 0.5 / l).abs() < 1e-15);
        assert_eq!(p.epochs_per_restart, 6);
        assert!(p.is_theory_consistent(1.0, 1e-12));
    }

    #[test]
    fn small_kappa_limit() {
        let p = derive_params_serial(1000, 1.0, 1.0, 2.0, None).unwrap();
        assert!(p.theta > 0.97 && p.theta < 1.0);
        assert_eq!(p.epochs_per_restart, 1);
    }

    #[test]
    fn theorem_schedule_numbers() {
        let p = derive_params_serial(10_000, 1e6, 1.0, 50.0, Some(20_000)).unwrap();
        let sm = 20_000f64.sqrt();
        assert!((p.theta - sm / (1000.0 + sm)).abs() < 1e-15);
        assert!((p.theta - 0.12390).abs() < 1e-5);
        assert_eq!(p.epochs_per_restart, 708);
    }

    #[test]
    fn async_reduces_to_serial() {
        let s = derive_params_serial(300, 5e4, 0.7, 50.0, None).unwrap();
        let a = derive_params_async(300, 5e4, 0.7, 50.0, 0.3, 0.0, None).unwrap();
        assert_eq!(s, a);
    }

    #[test]
    fn async_factor_four() {
        // delta = 1, tau~ = 1.5 gives A = 4; kappa = m.
        let l = 3.0;
        let p = derive_params_async(50, 100.0, l, 2.0, 1.0, 1.5, None).unwrap();
        assert!((p.theta - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.eta - 1.0 / (2.0 * l)).abs() < 1e-15);
        assert!(p.is_theory_consistent(1.0, 1e-12));
    }

    #[test]
    fn rcv1_like_async_schedule() {
        let p = derive_params_async(10_000, 1e6, 1.0, 50.0, 0.42, 10.0, Some(20_000)).unwrap();
        let a = 1.0 + 2.0 * 0.42f64.sqrt() * 10.0;
        assert!((a - 13.96).abs() < 0.01);
        assert_eq!(p.epochs_per_restart, 2643);
    }

    #[test]
    fn parameter_errors() {
        assert!(derive_params_serial(10, 10.0, 1.0, 1.0, None).is_err());
        assert!(derive_params_serial(10, 10.0, 1.0, 0.5, None).is_err());
        assert!(derive_params_async(10, 10.0, 1.0, 2.0, 0.0, 1.0, None).is_err());
        assert!(derive_params_async(10, 10.0, 1.0, 2.0, 1.5, 1.0, None).is_err());
        assert!(derive_params_async(10, 10.0, 1.0, 2.0, 0.5, -1.0, None).is_err());
    }

    #[test]
    fn restart_count() {
        assert_eq!(restarts_needed(1.0, 1e-3, 10.0), 3);
        assert_eq!(restarts_needed(1e-5, 1e-3, 10.0), 0);
    }
}
