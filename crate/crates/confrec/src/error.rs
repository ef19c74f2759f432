//! Crate-wide error type and the process exit codes the CLI maps it to.

use thiserror::Error;

/// Errors surfaced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: unknown keys, unparseable values, invalid ranges.
    #[error("config error: {0}")]
    Config(String),

    /// Bad or missing input data: unreadable files, malformed records,
    /// datasets too small to split.
    #[error("data error: {0}")]
    Data(String),

    /// Numeric failure during training or evaluation (divergence, metrics
    /// undefined on single-class input).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(format!("json: {e}"))
    }
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
