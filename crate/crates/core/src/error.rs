use thiserror::Error;

/// Errors raised by the solver and the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("weight undefined at node {index} (value {value}) and no cell-average rule applies")]
    WeightUndefined { index: usize, value: f64 },

    #[error("density not integrable at the origin: endpoint exponent {0} <= -1")]
    NotIntegrable(f64),

    #[error("symbol is not elliptic: min ellipticity ratio {ratio} < declared kappa {kappa}")]
    NotElliptic { ratio: f64, kappa: f64 },

    #[error("dyadic level {j} outside admissible range [{lo}, {hi}]")]
    LevelOutOfBand { j: i32, lo: i32, hi: i32 },

    #[error("smoothness sequence does not cover levels [{lo}, {hi}]")]
    SequenceCoverage { lo: i32, hi: i32 },

    #[error("overflow evaluating 2^r(j) at j = {0}")]
    Overflow(i32),

    #[error("regularity constant undecided: divergence ratio {0} lies in [2, 4]")]
    Undecided(f64),

    #[error("estimate violation: right-hand side is zero while left-hand side is {0}")]
    EstimateViolation(f64),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
