use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeError { expected: usize, got: usize },
    #[error("noise level must be positive and finite, got {0}")]
    InvalidNoise(f64),
    #[error("operation requires a mixture or delta-mixture model")]
    WrongVariant,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("unsupported framework: {0}")]
    UnsupportedFramework(String),
    #[error("degenerate plane: spanning vectors are (nearly) linearly dependent")]
    DegeneratePlane,
    #[error("non-finite state at step {step}")]
    NumericalBlowup { step: usize },
    #[error("skip noise level {sigma_skip} outside ({sigma_min}, {sigma_max}]")]
    InvalidSkip {
        sigma_skip: f64,
        sigma_min: f64,
        sigma_max: f64,
    },
    #[error("invalid cluster count K={k} for N={n} samples")]
    InvalidK { k: usize, n: usize },
    #[error("trajectory noise levels do not match")]
    GridMismatch,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeError { expected, got });
    }
    Ok(())
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidNoise(sigma));
    }
    Ok(())
}
