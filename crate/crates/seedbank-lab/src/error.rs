use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("kernels live on different tori ({left} vs {right})")]
    TorusMismatch { left: String, right: String },

    #[error("dt = {dt} violates the stability guard (dt * {rate} = {product:.4} > 0.1)")]
    Stability { dt: f64, rate: f64, product: f64 },

    #[error("state space exceeds the cap of {cap} states")]
    StateSpaceOverflow { cap: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit status used by the `seedbank-lab` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. }
            | Error::TorusMismatch { .. }
            | Error::Stability { .. }
            | Error::Parse { .. } => 2,
            Error::StateSpaceOverflow { .. } | Error::Numeric(_) | Error::Inconclusive(_) => 3,
            Error::Io { .. } => 4,
        }
    }

    /// Short machine-readable tag for structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "invalid",
            Error::TorusMismatch { .. } => "torus-mismatch",
            Error::Stability { .. } => "stability",
            Error::StateSpaceOverflow { .. } => "state-space-overflow",
            Error::Numeric(_) => "numeric",
            Error::Inconclusive(_) => "inconclusive",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}
