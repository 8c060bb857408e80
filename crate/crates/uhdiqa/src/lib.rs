//! File formats, dataset IO and command-line plumbing around `uhdiqa-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod decode;
mod error;
pub mod synth;
pub mod trace;

pub use error::{IoError, Result};
