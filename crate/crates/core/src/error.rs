use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed number {value:?}")]
    MalformedNumber { line: usize, value: String },

    #[error("line {line}: p-value {value} outside [0, 1]")]
    PValueOutOfRange { line: usize, value: f64 },

    #[error("line {line}: invalid label {value:?} (expected 0 or 1)")]
    InvalidLabel { line: usize, value: String },

    #[error("line {line}: mixed labeled and unlabeled rows")]
    MixedLabels { line: usize },

    #[error("line {line}: expected `group,pvalue[,label]`")]
    MalformedRow { line: usize },

    #[error("malformed header {0:?}: expected `group,pvalue[,label]`")]
    MalformedHeader(String),

    #[error("empty dataset")]
    Empty,

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("ground-truth labels are required")]
    MissingLabels,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("counting function is not nondecreasing at grid index {index}")]
    NonMonotone { index: usize },

    #[error("weights undefined: {0}")]
    WeightsUndefined(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
