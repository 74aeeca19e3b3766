use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the crate.
///
/// Variants fall into three groups: input/ingestion problems, domain
/// precondition violations, and internal-consistency failures (a proved
/// invariant that did not hold, which always indicates a bug).
#[derive(Debug, Error)]
pub enum Error {
    #[error("price at row {index} is not strictly positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("price series needs at least 2 prices, got {len}")]
    TooShort { len: usize },

    #[error("dates must be strictly increasing and match the price count")]
    InvalidDates,

    #[error("empty input")]
    Empty,

    #[error("return at index {index} is {value}, must be strictly greater than -1")]
    ReturnBelowNegOne { index: usize, value: f64 },

    #[error("column `{column}` not found in header")]
    MissingColumn { column: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid return bounds [{x_min}, {x_max}]")]
    InvalidBounds { x_min: f64, x_max: f64 },

    #[error("invalid return model: {0}")]
    InvalidModel(String),

    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("initial account value must be positive and finite, got {0}")]
    InvalidAccount(f64),

    #[error("gain {k_gain} is not admissible: must lie in [0, {k_max}]")]
    InadmissibleGain { k_gain: f64, k_max: f64 },

    #[error("return {value} at stage {stage} lies outside [{x_min}, {x_max}]")]
    ReturnOutOfBounds {
        stage: usize,
        value: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("account value overflowed at stage {stage}")]
    Overflow { stage: usize },

    #[error("stage {stage} is too small (need at least {min})")]
    StageTooSmall { stage: usize, min: usize },

    #[error("mean return {0} outside the admissible domain (-1, x_max]")]
    InvalidDrift(f64),

    #[error("variance must be nonnegative and finite, got {0}")]
    InvalidVariance(f64),

    #[error("scaled drift K*mu = {0} outside (-1, 1]")]
    ScaledDriftOutOfRange(f64),

    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("target std {target} is not below the feasibility ceiling s_max = {s_max}")]
    TargetTooLarge { target: f64, s_max: f64 },

    #[error("target std must be positive, got {0}")]
    TargetNonpositive(f64),

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("mean return is zero: the expected gain is identically 0 at alpha = 1/2, so the optimal gain is not unique")]
    ZeroDrift,

    #[error("return variance is zero: std of the gain-loss is identically 0")]
    ZeroVolatility,

    #[error(
        "Monte-Carlo std estimate is not monotone in K near K = {k_gain}; increase the path count"
    )]
    NonMonotoneEstimate { k_gain: f64 },

    #[error("need at least {min} paths, got {n_paths}")]
    TooFewPaths { n_paths: usize, min: usize },

    #[error("exhaustive enumeration needs {paths} paths, above the limit {limit}")]
    TooLarge { paths: f64, limit: f64 },

    #[error("path lengths differ: asset {index} has {len}, expected {expected}")]
    LengthMismatch {
        index: usize,
        len: usize,
        expected: usize,
    },

    #[error("asset {index}: {source}")]
    Asset {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency violation: {0}")]
    Internal(String),
}

impl Error {
    /// True when the error signals a failed proved invariant rather than bad input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Internal(_) => true,
            Error::Asset { source, .. } => source.is_internal(),
            _ => false,
        }
    }

    pub(crate) fn for_asset(index: usize) -> impl FnOnce(Error) -> Error {
        move |source| Error::Asset {
            index,
            source: Box::new(source),
        }
    }
}
