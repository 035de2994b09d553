use std::io;

use thiserror::Error;

/// Errors raised by the pairlab library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented domain (non-positive width, zero duration, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The input is valid but lies outside the validity domain of a model.
    #[error("outside model domain: {0}")]
    Domain(String),

    /// A result is mathematically undefined for the given input (zero heralds, zero rates).
    #[error("undefined result: {0}")]
    Undefined(String),

    /// Inputs are individually valid but mutually inconsistent.
    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    /// Time-tag data violates an invariant (unsorted stream, bad channel, ...).
    #[error("data error: {0}")]
    Data(String),

    /// File does not follow the PTT1 layout.
    #[error("format error: {0}")]
    Format(String),

    /// File ends early or is otherwise damaged at a known position.
    #[error("corrupt file at byte offset {offset}: {message}")]
    Corruption { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable class name, used in JSON error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Domain(_) => "domain",
            Error::Undefined(_) => "undefined",
            Error::Inconsistent(_) => "inconsistent",
            Error::Data(_) => "data",
            Error::Format(_) => "format",
            Error::Corruption { .. } => "corruption",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

/// Checks that `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(param(format!("{name} must be finite and > 0, got {value}")))
    }
}

/// Checks that `value` is finite and non-negative.
pub(crate) fn require_non_negative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(param(format!("{name} must be finite and >= 0, got {value}")))
    }
}

/// Checks that `value` lies in the closed unit interval.
pub(crate) fn require_fraction(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(param(format!("{name} must lie in [0, 1], got {value}")))
    }
}
