//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while configuring or running a simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation before any work started.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two containers that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An iterate left the representable range mid-run. The round index is
    /// the first round whose post-update state contained a non-finite value.
    #[error("run diverged at round {round}: non-finite iterate")]
    Diverged { round: usize },

    /// A finite sample stream ran dry in one-pass mode.
    #[error("user {user} exhausted its {available} samples (requested more in one-pass mode)")]
    StreamExhausted { user: usize, available: usize },

    /// A data file could not be ingested. Line numbers are 1-based and count
    /// the header.
    #[error("{file}:{line}: {message}")]
    Ingest {
        file: String,
        line: usize,
        message: String,
    },

    /// Experiment config file rejected.
    #[error("config error: {0}")]
    Config(String),

    /// A harness query asked for data the run table does not contain.
    #[error("table query failed: {0}")]
    TableQuery(String),

    /// Wrapped I/O failure with the path that caused it.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// CSV-level failure not tied to a specific field.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
