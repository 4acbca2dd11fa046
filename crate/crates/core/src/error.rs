use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or command-line argument.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed manifest or configuration text.
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    /// Malformed or inconsistent feature/codebook/model file.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    /// Data that violates a domain invariant (non-finite values, too few
    /// samples, mismatched lengths, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Singular solve or non-convergence.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 2 config/parse, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Format { .. }
            | Error::Data(_)
            | Error::DimensionMismatch { .. }
            | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}
