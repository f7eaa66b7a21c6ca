//! Optimal sampling designs for random-effect regression models with
//! correlated within-subject errors.
//!
//! The pipeline: optimize an asymptotic design density, read an exact
//! n-point design off its quantiles, then refine the points under the
//! finite-sample estimator covariance.

pub mod cli;
pub mod correlation;
pub mod covariance;
pub mod density;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod problem;

pub use error::{Error, Result};
