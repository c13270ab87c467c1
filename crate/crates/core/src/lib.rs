//! Unsupervised person re-identification assisted by wireless positioning
//! trajectories, on synthetic multi-camera worlds.
//!
//! The crate is organised along the processing chain:
//!
//! - [`scenario`]: synthetic worlds (cameras, walkers, phones, videos) and
//!   their JSON document format.
//! - [`sensing`]: wireless fragments inside camera sensing discs and the
//!   videos related to each fragment.
//! - [`mmda`]: per-trajectory adaptive k-means, path consistency and the
//!   sparse wireless similarity tensor.
//! - [`graph`]: histogram statistics of the tensor and the multi-head graph
//!   network that learns its adjacency from them.
//! - [`visual`]: the trainable appearance embedding and its two training
//!   regimes.
//! - [`association`]: mutual cross-camera nearest-neighbour pseudo labels.
//! - [`eval`]: mAP, CMC and adjusted mutual information.
//! - [`pipeline`]: the alternating training loop, the visual-only baseline
//!   and ablation sweeps.
//! - [`cli`]: the command-line surface.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod mmda;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod visual;

pub use error::{Error, Result};
