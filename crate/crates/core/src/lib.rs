//! Robust linear regression under the multi-kernel correntropy loss.
//!
//! The crate provides the fixed-point solver for the loss, the heavy-tailed
//! density it is optimal for, maximum-likelihood tuning of the per-channel
//! kernel parameters inside an EM-style loop, closed-form robustness bounds
//! for scalar problems, baseline estimators, an ellipsoid-fitting pipeline for
//! magnetometer calibration and a seeded Monte-Carlo harness.

pub mod baselines;
pub mod bfgs;
pub mod cli;
pub mod datagen;
pub mod distribution;
pub mod ellipsoid;
pub mod em;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
mod linalg;
pub mod param_opt;
pub mod quadrature;
pub mod robustness;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    channel_column, residuals, weighted_residuals, ChannelParams, Dataset, PrecisionSpec, RegressionResult, Sample,
    SolverConfig,
};
