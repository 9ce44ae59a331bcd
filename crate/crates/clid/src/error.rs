//! Error type shared across the crate.

use std::io;

/// Unified error for data handling, model math, training, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is outside its legal range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Array or list dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input data violates a precondition (non-finite value, bad label, ...).
    #[error("bad data: {0}")]
    Data(String),

    /// A text input could not be parsed. Line numbers are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    /// A metric has no defined value on the given input.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// A checkpoint or model bundle is malformed.
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
