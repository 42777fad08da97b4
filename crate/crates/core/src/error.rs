use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The medcouple kernel set is empty (no pair straddles the median).
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("missing input file {}", path.display())]
    MissingInput { path: PathBuf },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invariant breach: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    ///
    /// 0 success, 2 missing input, 3 invalid config, 4 I/O failure,
    /// 5 internal invariant breach. Estimator input errors reaching the
    /// CLI are treated as invariant breaches since the simulator should
    /// never produce them.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingInput { .. } => 2,
            Error::InvalidConfig { .. } => 3,
            Error::Io { .. } => 4,
            Error::InvalidInput(_) | Error::DegenerateSample(_) | Error::Invariant(_) => 5,
        }
    }
}
