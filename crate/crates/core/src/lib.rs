//! Combinatorial-bandit batch selection for minibatch training under label
//! noise.
//!
//! The crate is split along the pipeline an experiment runs through:
//!
//! - [`bandit`]: Exp3 and reward-guided FPL with geometric re-sampling,
//!   generic over the number of arms and the batch size.
//! - [`metrics`]: prediction histories, the variance weight, and the mapping
//!   from weight to bandit reward.
//! - [`data`]: synthetic blobs, CSV ingestion, splitting, and symmetric label
//!   noise.
//! - [`trainer`]: a one-hidden-layer softmax classifier trained by momentum
//!   descent.
//! - [`harness`]: experiment configuration, the select/train/observe/update
//!   loop, and line-delimited run records.
//! - [`analysis`]: confidence intervals, occurrence curves, mislabeled
//!   overlays, weight entropy, and SVG/CSV emission.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bandit;
pub mod data;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod trainer;
