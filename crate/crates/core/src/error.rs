use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite values: {0}")]
    Numeric(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("empty result: {0}")]
    EmptyResult(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("alignment failed: {0}")]
    Alignment(String),
    #[error("training diverged: {0}")]
    Training(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("unsupported mode: {0}")]
    Mode(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    Corruption(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Mode(_) => 2,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::EmptyResult(_)
            | Error::Domain(_)
            | Error::Alignment(_)
            | Error::Format(_)
            | Error::Corruption(_)
            | Error::Io { .. }
            | Error::Json(_) => 3,
            Error::Training(_) | Error::Numeric(_) | Error::State(_) | Error::Dimension(_) => 4,
            Error::UndefinedMetric(_) => 5,
        }
    }
}
