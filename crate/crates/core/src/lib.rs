//! Paired tactile data simulation and cross-sensor translation.
//!
//! A camera-like grid sensor and a sparse taxel array observe the same
//! synthetic contacts. The crate converts taxel arrays to tactile images and
//! back, trains translators from camera images to taxel arrays, and scores
//! them.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contact;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod interp;
pub mod metrics;
pub mod translate;

pub use error::{Error, Result};

/// Saturation count of the taxel sensor.
pub const FULLSCALE: f64 = 40000.0;
