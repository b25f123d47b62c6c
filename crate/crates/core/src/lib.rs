//! Micro-stripe iris presentation attack detection.
//!
//! The pipeline segments pupil and iris, widens the annulus around the
//! iris/sclera border, unwraps it into a fixed-size polar texture, enhances
//! it with CLAHE and slices it into overlapping horizontal micro-stripes.
//! Every stripe is scored on its own and the per-stripe decisions are fused
//! by majority vote. Evaluation follows ISO/IEC 30107-3 error rates.

pub mod classifier;
pub mod fusion;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod normalization;
pub mod rings;
pub mod segmentation;
pub mod stripes;
