//! Gaussian-process based moving horizon estimation.
//!
//! The crate learns a state-space model from offline state/output data with
//! one exact GP per state and output component, runs a moving horizon
//! estimator whose dynamics are the GP posterior means and whose cost
//! weights grow with the posterior variances, and evaluates the practical
//! robust-stability error bounds of the resulting estimator.
//!
//! Module map:
//! - [`gp`]: single-output GP regression and hyperparameter fitting
//! - [`model`]: the learned state-space model and its weight matrices
//! - [`mhe`]: the estimator and its window solver
//! - [`dynamics`]: ground-truth systems, the batch reactor, data generation
//! - [`bounds`]: horizon, mismatch and error-bound evaluation
//! - [`harness`]: experiment configuration and the CLI commands

pub mod bounds;
pub mod boxset;
pub mod dynamics;
pub mod error;
pub mod gp;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod mhe;
pub mod model;
pub mod rng;

pub use boxset::BoxSet;
pub use error::{Error, Result};
