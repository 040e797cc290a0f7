use std::path::PathBuf;

use thiserror::Error;
use zsgan_numeric::NumericError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numeric(#[from] NumericError),

    #[error("{}: format error at byte {offset}: {msg}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    /// Training produced a non-finite loss or parameter.
    #[error("non-finite training state at step {step}: {detail}")]
    Diverged { step: u64, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            msg: msg.into(),
        }
    }

    /// True for numeric failures (divergence, non-finite values, solver caps).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::NoConvergence(_) | Error::Singular(_) | Error::Numeric(NumericError::NonFinite(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
