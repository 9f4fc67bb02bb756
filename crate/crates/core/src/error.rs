use thiserror::Error;

/// Errors produced by the repair, diagnostics and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("constraint matrix is rank deficient (sigma_min = {sigma_min:e}, threshold = {threshold:e})")]
    RankDeficient { sigma_min: f64, threshold: f64 },

    #[error("conservation vector is zero")]
    ZeroVector,

    #[error("Cholesky factorization of the Gram matrix failed at pivot {pivot}")]
    GramSolveFailure { pivot: usize },

    #[error("KKT system is singular at column {column}")]
    SingularKkt { column: usize },

    #[error("dense eigensolver did not converge")]
    EigenFailure,

    #[error("singular value decomposition did not converge")]
    SvdFailure,

    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("state became non-finite at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
