//! Rebalancing with calibrated sub-classes.
//!
//! Mixture models summarize the large classes; minority rows borrow
//! statistics from the nearest mixture components to define per-row
//! Gaussians from which synthetic rows are drawn. The crate also ships the
//! surrounding pipeline: dataset handling, an MLP autoencoder for latent
//! features, baselines and evaluation metrics.

pub mod baselines;
pub mod dataset;
pub mod embedder;
pub mod error;
pub mod gmm;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod rcs;
pub mod rng;

pub use dataset::{LabelColumn, LabeledDataset};
pub use error::{RcsError, Result};
pub use par::Exec;
pub use rng::Seed;
