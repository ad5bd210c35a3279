//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by scenario construction, simulation and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented constraints.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Not enough records, gaps or probes to compute the requested result.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A scenario or record file failed to parse. The message carries the
    /// location (line/column) reported by the underlying parser.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A state that validated inputs should make unreachable.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
