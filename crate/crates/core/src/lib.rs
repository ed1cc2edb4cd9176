//! Line-guided local warping with a global similarity constraint.
//!
//! The crate is `no_std` (with `alloc`): all stages are pure functions over
//! in-memory correspondences and rasters. File formats, PNG IO and the command
//! line live in the companion `linestitch` crate.

#![no_std]
// `!(a > b)` comparisons deliberately reject NaN; numeric kernels index by row.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod compositor;
pub mod correspondence;
pub mod dlt;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod moving_dlt;
pub mod optimizer;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
