use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid split fraction: {0}")]
    InvalidFraction(String),
    #[error("mask infeasible: {0}")]
    MaskInfeasible(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("node set mismatch: {0}")]
    NodeSetMismatch(String),
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("observation has no points")]
    EmptyObservation,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("kernel matrix singular after jitter escalation")]
    SingularKernel,
    #[error("rank deficient: only {0} nonzero eigenvalues")]
    RankDeficient(usize),
    #[error("serialization error: {0}")]
    Serialize(String),
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
