//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the estimation and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Cholesky pivot was non-positive: the matrix is not positive definite.
    /// For residual covariances this signals a degenerate fit (e.g. n <= d or
    /// exact interpolation).
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("eigenvalue iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    /// The empirical residual covariance has no Cholesky factor; the
    /// log-determinant cost is undefined at this point.
    #[error("degenerate residual covariance: log-determinant cost undefined")]
    DegenerateCovariance,

    #[error("objective is undefined at the starting point")]
    InfeasibleStart,

    #[error("all {0} restarts started from infeasible points")]
    AllRestartsInfeasible(usize),

    /// The restricted fit beat the full fit by more than the tolerance;
    /// an optimizer failure, not a statistical result.
    #[error("nesting violation: T_n = {t_n} below -1e-6")]
    NestingViolation { t_n: f64 },

    #[error("cost kind mismatch: {0}")]
    KindMismatch(String),

    /// The autoregressive generator left the stability region.
    #[error("generated series diverged at t = {t} (|Y_t| > {bound:e})")]
    Diverged { t: usize, bound: f64 },

    #[error("{failed} of {total} replications failed (more than 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
