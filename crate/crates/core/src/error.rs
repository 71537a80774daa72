use thiserror::Error;

/// Errors raised while reading or characterizing a dataset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: coordinate indices not strictly ascending ({prev} then {next})")]
    NonAscending { line: usize, prev: usize, next: usize },
    #[error("line {line}: index {index} exceeds the declared dimension {dim}")]
    IndexOutOfRange { line: usize, index: usize, dim: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("more than two distinct labels found ({0:?}...)")]
    Multiclass(Vec<f64>),
    #[error("sample {0} has an all-zero row")]
    ZeroRow(usize),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("binary cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors raised by objective evaluation and the solvers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample index {index} out of range (n = {n})")]
    SampleOutOfRange { index: usize, n: usize },
    #[error("snapshot context was built for a different problem")]
    StaleSnapshot,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("diverged at restart {restart}, epoch {epoch}: suboptimality {suboptimality:e} (initial {initial:e})")]
    Diverged {
        restart: usize,
        epoch: usize,
        suboptimality: f64,
        initial: f64,
    },
    #[error("worker thread panicked: {0}")]
    WorkerPanic(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SolverError> = std::result::Result<T, E>;
