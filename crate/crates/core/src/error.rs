use thiserror::Error;

/// Errors produced by the optimizers, objectives, predictors and labs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid batch size {batch} for {samples} samples")]
    InvalidBatch { batch: usize, samples: usize },

    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("invalid escape geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("division by zero: {0}")]
    Division(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("wrong optimizer mode: {0}")]
    Mode(String),

    #[error("incomplete trace: {0}")]
    MissingHistory(String),

    #[error("{aborted} of {trials} trials aborted on non-finite state")]
    TooManyAborted { aborted: usize, trials: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("malformed dataset file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
