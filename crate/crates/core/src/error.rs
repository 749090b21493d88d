//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by laws, environments, the walk engine and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// The positive part of the law has infinite mean, so the integrated
    /// tail (and everything downstream of it) is undefined.
    #[error("positive part of the increment law has infinite mean ({0})")]
    UnboundedPositiveMean(String),

    /// Requested an insensitivity scale for a family that is not long-tailed.
    #[error("law family `{0}` is not long-tailed")]
    NotLongTailed(String),

    /// The series of non-unit offspring probabilities diverges, so the
    /// residual branching weights d_n are undefined.
    #[error("sum of non-unit offspring probabilities diverges")]
    DivergentQSeries,

    /// The environment keeps branching forever; quantities that require a
    /// finite fading time are unavailable.
    #[error("environment is not fading: {0}")]
    NonFadingEnvironment(String),

    /// A stopping rule did not realize within the configured cap.
    #[error("stopping rule not realized within cap of {cap} generations")]
    NotRealizedWithinCap { cap: u64 },

    /// The big-jump estimator disagreed with crude Monte Carlo at the
    /// calibration point by more than 3 combined standard errors.
    #[error(
        "big-jump calibration failed at x = {x}: crude {crude} ± {crude_se}, big-jump {big_jump} ± {big_jump_se}"
    )]
    CalibrationFailed {
        x: f64,
        crude: f64,
        crude_se: f64,
        big_jump: f64,
        big_jump_se: f64,
    },

    /// The tail series cannot be summed: flat boundary with an unbounded
    /// stopping time and non-integrable weights.
    #[error("tail series is not summable: {0}")]
    NonSummable(String),

    /// A parameter is outside its admissible range.
    #[error("parameter `{name}` = {value} out of range: {reason}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A run configuration violates the hypotheses of the suite it targets.
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    /// Malformed law / environment / config specification.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
