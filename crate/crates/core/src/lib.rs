//! Monocular size estimation for floating river debris.
//!
//! The crate turns bounding-box detections into metric object dimensions
//! under a pinhole camera model, fits regression corrections for the
//! estimator's systematic bias, scores detectors against ground truth and
//! builds dataset splits in which temporally correlated frames never cross
//! subset boundaries.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod correction;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod leakage;
