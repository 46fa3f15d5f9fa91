use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("scale level {level} exceeds the grid resolution 2^{max_level}")]
    ScaleTooFine { level: u32, max_level: u32 },

    #[error("at least {required} scale levels are needed, got {actual}")]
    TooFewLevels { required: usize, actual: usize },

    #[error("q = {q} lies within the exclusion window around 1 (half-width {delta}); use the information dimension")]
    NearUnitMoment { q: f64, delta: f64 },

    #[error("retained box with non-positive mass {mass} at level {level}")]
    NonPositiveBox { level: u32, mass: f64 },

    #[error("envelope underdetermined: {0}")]
    EnvelopeUnderdetermined(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
