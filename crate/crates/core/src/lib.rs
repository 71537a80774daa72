//! Sparse accelerated variance-reduced solvers for sparsified ℓ2-logistic
//! regression, serial and lock-free asynchronous.

pub mod asynch;
pub mod dataset;
pub mod error;
pub mod fstar;
pub mod harness;
pub mod objective;
pub mod params;
pub mod rng;
pub mod serial;
pub mod shared;
pub mod trace;

pub use dataset::{compute_support_profile, normalize_rows, SparseDataset, SupportProfile};
pub use error::{DataError, Result, SolverError};
pub use objective::{Coupling, Problem, Regularizer, SnapshotContext, Smoothness, SparseGradient};
pub use params::{derive_params_async, derive_params_serial, SolverParams};
pub use trace::{Budget, RunControl, SolverOutput, StopReason, TraceRecord};
pub use shared::SharedVector;
