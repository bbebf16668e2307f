//! Geometry, anchoring, losses and evaluation for structure-guided lane detection.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchoring;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod repr;
pub mod structures;
pub mod trainer;

pub use error::{LaneError, Result};
