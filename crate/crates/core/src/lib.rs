//! Subsampled bootstrap variance estimation under a time budget.
//!
//! Four engines estimate Cov(θ̂): the traditional bootstrap (TB), the bag of
//! little bootstraps (BLB), the n-out-of-N subsampled bootstrap (SB) and the
//! subsampled double bootstrap (SDB). [`msemodel`] predicts the leading-order
//! MSE of each, and [`tuner`] picks (n, R, B) minimizing that prediction
//! subject to a calibrated wall-clock budget.

pub mod error;
pub mod bench;
pub mod engines;
pub mod estimators;
pub mod moments;
pub mod msemodel;
pub mod sampling;
pub mod tuner;

pub use error::{Error, Result};
pub use estimators::{Dataset, Estimator, WeightedView};
pub use moments::MomentConstants;
pub use sampling::SeedSpec;
