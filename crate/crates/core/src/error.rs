use thiserror::Error;

/// Errors surfaced by calibration, aggregation, and ingestion primitives.
#[derive(Debug, Error)]
pub enum OlcpError {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("invalid level: {0}")]
    InvalidLevel(f64),
    #[error("empty calibration window")]
    EmptyWindow,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite score: {0}")]
    NonFiniteScore(f64),
    #[error("non-finite covariate entry")]
    NonFiniteCovariate,
    #[error("negative weight: {0}")]
    NegativeWeight(f64),
    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(f64),
    #[error("invalid step size: {0}")]
    InvalidStepSize(f64),
    #[error("expert pool needs at least two experts, got {0}")]
    TooFewExperts(usize),
    #[error("non-finite loss entry at index {0}")]
    NonFiniteLoss(usize),
    #[error("degenerate design: covariates have zero variance")]
    DegenerateDesign,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` for column `{column}`")]
    UnparsableValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: time index {current} does not increase past {previous}")]
    NonMonotoneTime {
        row: usize,
        previous: u64,
        current: u64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, OlcpError>;
