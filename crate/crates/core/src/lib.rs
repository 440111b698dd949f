//! Simulation and measurement of block-DCT compression noise in stereo
//! disparity maps: a quantization-table codec, synthetic terrain and shifted
//! stereo pairs, a sub-pixel ZNCC matcher, residual statistics, a low-pass
//! residual estimator, patch dataset export, and the experiment sweeps that
//! tie them together.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod dataset;
pub mod denoiser;
pub mod error;
pub mod io;
pub mod matcher;
pub mod raster;
pub mod report;
pub mod residual;
pub mod stats;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{DisparityMap, ImageGrid, ResidualField};
pub use stats::SummaryStats;
