use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum FairError {
    #[error("instance is infeasible")]
    Infeasible,
    #[error("instance is unbounded")]
    Unbounded,
    #[error("solver hit its time limit")]
    TimeLimit,
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("epsilon must lie in [0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("lottery does not realize a distribution over the pool: {0}")]
    NotRealizable(String),
    #[error("solution pool is empty")]
    EmptyPool,
    #[error("solution pool is not proven complete")]
    PoolIncomplete,
    #[error("initial pool does not cover agent {0}")]
    CoverageError(usize),
    #[error("objective gradient undefined: {0}")]
    GradientUndefined(String),
    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),
    #[error("objective coefficients or variable domains are not integer: {0}")]
    NonIntegerObjective(String),
    #[error("{agents} agents is too many for exact enumeration (limit {limit})")]
    TooLargeForExact { agents: usize, limit: usize },
    #[error("operation requires dichotomous preferences")]
    NotDichotomous,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = FairError> = std::result::Result<T, E>;
