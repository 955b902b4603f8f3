use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared across the crate.
///
/// `is_config` distinguishes errors caused by invalid configuration or
/// invalid parameter combinations (caller mistakes) from runtime failures
/// (bad data, I/O, numerics); the CLI maps the former to exit code 2 and
/// the latter to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("non-finite value produced in window {window}")]
    NonFiniteWindow { window: usize },
    #[error("cannot compare vectors: zero norm")]
    ZeroNorm,
    #[error("index {index} out of range for dimension {dim}")]
    OutOfRange { index: usize, dim: usize },
    #[error("parameter search exhausted: {0}")]
    Exhausted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from invalid configuration rather than a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::Protocol(_) | Error::OutOfRange { .. }
        )
    }
}
