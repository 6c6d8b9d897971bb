//! Prediction intervals for fixed-event point forecasts.
//!
//! A fixed-event forecast targets one annual quantity (say, GDP growth in a
//! given year) and is re-issued as the year approaches, so the forecast
//! horizon shrinks while the target stays put. This crate models the
//! distribution of the resulting forecast errors as a function of horizon:
//!
//! - [`ar1`]: a latent monthly AR(1) process, its implied term structure of
//!   uncertainty, error covariances and path simulation.
//! - [`models`]: the three horizon-dependent error models (AR(1)-implied
//!   Gaussian, piecewise-linear Gaussian, quantile regression) and the losses
//!   used to fit and score them.
//! - [`estimation`]: minimum-CRPS and tick-loss estimation with a profiled
//!   leveling horizon.
//! - [`evaluation`]: interval score, coverage, length and Diebold-Mariano
//!   type tests with year-clustered standard errors.
//! - [`crossval`]: leave-one-target-year-out cross-validation.
//! - [`simstudy`]: the Monte Carlo study comparing all methods on simulated
//!   AR(1) data.
//! - [`data`]: ingestion, horizon coding and report serialization.

pub mod ar1;
pub mod crossval;
pub mod data;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod models;
pub mod normal;
pub mod observation;
pub mod simstudy;

pub use error::{Error, Result};
pub use observation::ErrorObservation;
