use thiserror::Error;

use crate::calibrate::TuneResult;

pub type Result<T> = std::result::Result<T, DroError>;

#[derive(Debug, Error)]
pub enum DroError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ratio {ratio} at position {index} does not exceed tolerance {tolerance}")]
    DegenerateRatio {
        index: usize,
        ratio: f64,
        tolerance: f64,
    },

    #[error("multiplier {index} is negative ({value})")]
    InvalidMultiplier { index: usize, value: f64 },

    #[error("{points} points are not enough for {clusters} clusters")]
    InsufficientData { points: usize, clusters: usize },

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("sample {index} at {point:?} lies outside the support box")]
    OutOfSupport { index: usize, point: Vec<f64> },

    #[error("region {region} has an unbounded box")]
    UnboundedSupport { region: usize },

    #[error("unsupported cost: {0}")]
    UnsupportedCost(String),

    #[error("unsupported objective: {0}")]
    UnsupportedObjective(String),

    #[error("the order cone does not intersect the probability simplex")]
    InfeasiblePrior,

    #[error("the ambiguity set is empty (rho below the minimal feasible radius)")]
    InfeasibleAmbiguity,

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension {0} is excluded by the concentration bound")]
    UnsupportedDimension(usize),

    #[error("truncated sampling accepted only {accepted} of {requested} draws before the cap")]
    DegenerateTruncation { accepted: usize, requested: usize },

    #[error("no candidate passed the reliability screen")]
    NoReliableCandidate(Box<TuneResult>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
