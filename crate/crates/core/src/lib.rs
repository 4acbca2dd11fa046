//! Video-level representations from per-frame feature sequences.
//!
//! Frame descriptors are fused with a frequency-domain branch (per-dimension
//! DFT magnitudes resampled to a fixed length), both branches are LLC-encoded
//! against k-means codebooks and max-pooled, and a one-vs-rest linear SVM is
//! trained on the fused vectors.
//!
//! ```text
//! ingest -> spectral -> codebook -> encoding -> classifier
//!                     \____________ pipeline ____________/
//! ```

pub mod classifier;
pub mod codebook;
pub mod encoding;
pub mod error;
pub mod ingest;
mod io_util;
mod linalg;
pub mod pipeline;
pub mod report;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
