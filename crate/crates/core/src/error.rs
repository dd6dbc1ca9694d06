use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KesError>;

#[derive(Debug, Error)]
pub enum KesError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate seed: no linked concept is present in the expansion")]
    DegenerateSeed,

    #[error("internal error: {0}")]
    Internal(String),
}

impl KesError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KesError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        KesError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by user input (files, flags, config) rather than
    /// by a broken invariant.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, KesError::Internal(_))
    }
}
