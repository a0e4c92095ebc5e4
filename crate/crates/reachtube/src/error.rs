//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("invalid interval: lo = {lo} > hi = {hi}")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("division by an interval containing zero: [{lo}, {hi}]")]
    DivisionByZero { lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("metric is not positive definite")]
    NotPositiveDefinite,

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("weights file error: {0}")]
    WeightsFile(String),

    #[error("step count exceeded max_steps = {max_steps} before reaching t = {t_end}")]
    Horizon { max_steps: usize, t_end: f64 },

    #[error("blowup: non-finite state encountered at t = {t}")]
    Blowup { t: f64 },

    #[error("enclosure validation failed at t = {t} after {retries} inflation retries")]
    EnclosureFailure { t: f64, retries: usize },

    #[error("confidence timeout: reached {achieved} < target {target} after {samples} samples")]
    ConfidenceTimeout {
        achieved: f64,
        target: f64,
        samples: usize,
    },

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ReachError>;
