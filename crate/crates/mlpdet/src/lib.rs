//! Multivariate nonlinear regression with one-hidden-layer perceptrons.
//!
//! The asymptotically efficient way to fit a multidimensional regression
//! with correlated noise components is generalized least squares with the
//! true noise covariance — which is unknown in practice. This crate instead
//! minimizes the log-determinant of the empirical residual covariance,
//! which reaches the same asymptotic variance with no covariance input, and
//! makes the parameter-count likelihood-ratio statistic converge to a plain
//! chi-square law.
//!
//! The pieces:
//!
//! - [`model`]: the tanh network, its per-output Jacobian, and
//!   canonicalization under the sign-flip / unit-permutation group;
//! - [`cost`]: residuals, the MSE / GLS / log-det costs, analytic gradients,
//!   and the log-det Hessian;
//! - [`optim`]: BFGS with a strong-Wolfe line search, multi-start fitting,
//!   and the iterated feasible-GLS loop;
//! - [`inference`]: information matrix, asymptotic standard errors, Wald
//!   statistics, and the chi-square test for the number of parameters;
//! - [`sim`]: data generators and the replicated estimator-comparison and
//!   test-calibration experiments;
//! - [`linalg`]: the small dense symmetric kernel underneath it all.
//!
//! Most capabilities have a runnable demo under `examples/`; the `mlpdet`
//! binary exposes the same operations on CSV files.

pub mod cost;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod rng;
pub mod sim;

pub use cost::{CostKind, Dataset, ResidualMatrix};
pub use error::{Error, Result};
pub use linalg::{Matrix, SpdMatrix};
pub use model::{MlpSpec, WeightVector};
pub use rng::RngStream;
