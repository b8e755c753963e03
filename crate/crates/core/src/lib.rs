//! Geometric core for editing the camera trajectory of a video.
//!
//! Per-frame depth is lifted into pointmaps, pointmaps are projected into a
//! target camera to obtain the induced 2D flow, frames are forward-warped
//! through that flow with a z-buffer, and the same flow re-aligns sinusoidal
//! positional encodings. Relative poses can be recovered from depth plus 2D
//! matches with PnP-RANSAC. Synthetic scenes with closed-form ground truth
//! back the test suite, and the metrics module provides the masked
//! PSNR/SSIM and difficulty/distortion evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod camera;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pe;
pub mod pose;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use grid::{FeatureMap, Frame, Grid, Mask};
