//! Confidence-aware age estimation: a mean/std regression head trained with
//! an age-decayed three-term loss, per-age-bucket range calibration at a
//! target false-positive rate, and the verification and comparability
//! decisions built on top of it.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod data;
pub mod decision;
pub mod error;
pub(crate) mod format;
pub mod loss;
pub mod metrics;
pub mod model;

pub use error::{JamError, Result};
