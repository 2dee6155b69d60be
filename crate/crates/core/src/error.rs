use crate::domain::Snapshot;
use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum MopoError {
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("input outside the reward domain [0,1]: x={x}, y={y}")]
    DomainError { x: f64, y: f64 },
    #[error("ratio Bradley-Terry form needs strictly positive rewards, got {r} and {r_prime}")]
    InvalidRatioForm { r: f64, r_prime: f64 },
    #[error("unknown canonical dataset id {0} (expected 1..=5)")]
    UnknownDataset(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("list is not sorted ascending")]
    NotSorted,
    #[error("importance ratios carry no mass in context row {row}")]
    DegenerateRho { row: usize },
    #[error("policy history does not reach back to step {needed}")]
    HistoryUnderflow { needed: usize },
    #[error("numerical divergence at step {step}: {what}")]
    NumericalDivergence {
        step: usize,
        what: String,
        last_good: Option<Box<Snapshot>>,
    },
    #[error("no simplex grid point satisfies the constraints (smallest max-violation {max_violation})")]
    Infeasible { max_violation: f64 },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MopoError>;

impl MopoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MopoError::Io {
            path: path.into(),
            source,
        }
    }
}
