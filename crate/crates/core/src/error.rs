use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the library. The variants line up with the CLI exit
/// codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (wrong dimensions, a state
    /// outside the box, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// Cholesky failed even after the jitter escalation.
    #[error("matrix not positive definite after jitter {jitter:e} (n = {size}, diag range [{min_diag:e}, {max_diag:e}])")]
    NotPositiveDefinite {
        size: usize,
        jitter: f64,
        min_diag: f64,
        max_diag: f64,
    },

    #[error("hyperparameter optimization failed: {0}")]
    Optimization(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code: 2 configuration, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) | Error::Config(_) => 2,
            Error::Numerical(_) | Error::NotPositiveDefinite { .. } | Error::Optimization(_) => 3,
            Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } => 4,
        }
    }
}

pub(crate) fn ensure_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::contract(format!(
            "{what}: expected dimension {expected}, got {got}"
        )));
    }
    Ok(())
}
