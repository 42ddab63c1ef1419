use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum VecmError {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFiniteData {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("effective rank exceeds {rank}: trailing singular values {offending:?} (largest {largest})")]
    RankViolation {
        rank: usize,
        largest: f64,
        offending: Vec<f64>,
    },

    #[error("{0} is not positive definite (Cholesky failed)")]
    NotPositiveDefinite(&'static str),

    #[error("regressor Gram matrix of size {dim}x{dim} is rank deficient; regressors are collinear")]
    CollinearRegressors { dim: usize },

    #[error("weight {value} at index {index} is not strictly positive")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("no stable parameter set found after {attempts} draws")]
    GenerationFailure { attempts: usize },

    #[error("simulated state became non-finite at step {step}")]
    SimulationOverflow { step: usize },

    #[error("SVD failed to converge")]
    SvdFailure,

    #[error("objective increased at iteration {iter}: {previous} -> {current}")]
    NonDescent {
        iter: usize,
        previous: f64,
        current: f64,
    },

    #[error("backtracking step size underflow at iteration {iter} (objective {objective})")]
    StepUnderflow { iter: usize, objective: f64 },

    #[error("NMSE undefined: true matrix has zero Frobenius norm")]
    UndefinedMetric,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, VecmError>;
