use thiserror::Error;

/// Errors produced by the simulation engine and its numerical primitives.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("length mismatch: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty input")]
    Empty,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probability vector not normalized: |sum - 1| = {deviation:.3e}")]
    NotNormalized { deviation: f64 },

    #[error("negative weight {value:.3e} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error(
        "detailed balance violated at t = {t}: |Γ[{i},{j}]γ[{j}] − Γ[{j},{i}]γ[{i}]| = {residual:.3e} (relative)"
    )]
    DetailedBalance { t: f64, i: usize, j: usize, residual: f64 },

    #[error("rate matrix is reducible; communicating classes: {blocks:?}")]
    ReducibleChain { blocks: Vec<Vec<usize>> },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("numerical guard tripped: {0}")]
    Numerics(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
