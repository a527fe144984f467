//! Finite-sample size and power audits for autocorrelation and
//! heteroskedasticity robust tests of linear restrictions in regression.
//!
//! The crate is organised bottom-up: [`model`] holds the regression and the
//! hypothesis, [`covariance`] the error covariance models and their singular
//! limits, [`estimators`] the variance estimators, [`statistics`] the test
//! statistics and adjusted designs, [`diagnostics`] the condition audits,
//! [`montecarlo`] the simulation engine, and [`cli`] the batch front-end.

pub mod cli;
pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod statistics;

pub use error::{Error, Result};
