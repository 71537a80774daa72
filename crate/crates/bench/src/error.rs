use std::fmt;

use accsvrg::SolverError;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or parameter values.
    Usage(String),
    /// Unreadable or malformed input data.
    Input(String),
    Diverged(String),
    /// A verification suite found a violation.
    Verification(String),
    /// Output or internal failure.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => EXIT_USAGE,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Diverged(m) => write!(f, "diverged: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Io(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Diverged { .. } => CliError::Diverged(e.to_string()),
            SolverError::Data(_) => CliError::Input(e.to_string()),
            SolverError::InvalidParam(_) | SolverError::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
