//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by calibration, geometry, evaluation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A dump or config line could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record referenced an entity that does not exist.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A calibration budget was infeasible for the calibration size.
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    #[error("unsupported dump version {0}")]
    UnsupportedVersion(u32),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
