use thiserror::Error;

use crate::gamma_search::GammaSearchState;

/// Errors raised by the solvers, geometry primitives and dense kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("derivative of order {requested} is not available (field supports up to order {max})")]
    UnsupportedOrder { requested: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear solve failed: {reason} (condition estimate {condition:e})")]
    LinearSolve { reason: String, condition: f64 },

    #[error("matrix of size {0} exceeds the dense-kernel ceiling of {max}", max = crate::linalg::MAX_DENSE_DIM)]
    TooLarge(usize),

    #[error("non-finite value encountered at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    #[error(
        "invalid search bracket [{lower:e}, {upper:e}]: lower-end target {target_lower:e}, upper-end target {target_upper:e}"
    )]
    Bracket {
        lower: f64,
        upper: f64,
        target_lower: f64,
        target_upper: f64,
    },

    #[error("implicit step did not converge after {iters} Newton iterations (residual {residual:e})")]
    OracleFailure { iters: usize, residual: f64 },

    #[error("step-size search failed at iteration {iteration}: {reason}; state: {state:?}")]
    SearchFailure {
        iteration: usize,
        reason: String,
        state: Box<GammaSearchState>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported problem: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
