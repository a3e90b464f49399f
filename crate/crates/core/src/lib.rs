//! Online, unsupervised, memory-free change-point detection for multivariate
//! time series.
//!
//! An ensemble of small reconstruction networks (skip-connected LSTM
//! autoencoder plus a shared-coefficient autoregressive branch) is trained
//! continuously on the incoming stream. Each member keeps a running mean of
//! its reconstruction loss; a sample whose loss exceeds a multiple of that
//! mean in a majority of members is out-of-distribution, and enough such
//! samples in a row declare a change-point. The detector retains a bounded
//! number of raw windows at all times.
//!
//! Modules:
//! - [`ndcore`] — dense `f64` kernel: matrices, activations, SGD, gradient checker
//! - [`taenet`] — the reconstruction network and its training step
//! - [`detector`] — ensemble, thresholds, and the change-point state machine
//! - [`metrics`] — segmentation covering and margin-matched F1/precision/recall
//! - [`data`] — ingestion, standardization, windowing, synthetic fixtures
//! - [`cli`] — subcommand implementations behind the `alacpd` binary

pub mod cli;
pub mod data;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod ndcore;
pub mod taenet;

pub use error::{Error, Result};
