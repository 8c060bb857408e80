//! Efficient quality assessment for ultra-high-definition images.
//!
//! A UHD image is never fed to the network at full resolution. Instead three
//! fixed-size views are built from it: a downsampled *aesthetic* view, a
//! *fragment* view spliced together from native-resolution mini-patches
//! sampled on a uniform grid, and a center *salient* crop. Each view goes
//! through its own feature extractor, the features are concatenated, and a
//! two-layer MLP regresses a quality score. Training uses a pairwise
//! fidelity loss on probit preference probabilities plus a per-pair squared
//! error term.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, image decoding
//! and the command line live in the `uhdiqa` crate. Enable the `std` feature
//! to let the matrix kernels pick SIMD paths at runtime.

#![no_std]
#![warn(rust_2018_idioms)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod complexity;
pub mod data;
mod error;
pub mod imaging;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod preprocess;
mod real;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use imaging::{Image, Rect};
pub use metrics::{MetricsReport, PredictionSet};
pub use model::{Branch, BranchSet, ExtractorSpec, ModelSpec, Normalization, QualityModel};
pub use preprocess::{BranchInputs, PreprocessConfig, SampleMode};
pub use real::Real;
