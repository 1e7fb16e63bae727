use thiserror::Error;

use crate::expr::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("variable x{} is outside the {dim}-dimensional input", .index + 1)]
    DimensionMismatch { index: usize, dim: usize },

    #[error("expression still contains parameter slot p{0}")]
    UnfilledParameter(usize),

    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },

    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("degenerate anchors: {0}")]
    DegenerateAnchors(String),

    #[error("insufficient valid rows: {valid} of {total} (need {required})")]
    InsufficientData {
        valid: usize,
        total: usize,
        required: usize,
    },

    #[error("oracle is invalid on every sampled row")]
    OracleFailure,

    #[error("library engine supports factor arity 1 or 2, got {0}")]
    UnsupportedArity(usize),

    #[error("no template candidate produced a valid evaluation")]
    NoValidCandidate,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown report format `{0}`")]
    UnknownFormat(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
