//! Desk-scale lab for spatio-temporal wave prediction and denoising.
//!
//! The crate generates a 2D circular-wave benchmark, trains DISTANA
//! prediction-kernel grids against ConvLSTM and TCN baselines on noisy data,
//! and evaluates closed-loop rollouts induced by teacher forcing or by
//! active tuning (gradient-based input inference).

pub mod adam;
pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod model;
pub mod pgm;
pub mod report;
pub mod rng;
pub mod train;
pub mod tuning;
pub mod wavd;
pub mod wave;

pub use error::{Error, Result};
