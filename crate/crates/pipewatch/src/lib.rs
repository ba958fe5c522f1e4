//! Streaming fault detection for water distribution networks.
//!
//! Pipe blockages show up as collective anomalies in pressure streams and
//! are caught by a per-sensor LSTM-VAE scored against an adaptive
//! max-training-loss threshold. Background leaks show up as concept drift
//! and are caught by a dual detector (a two-sample KS test on latent
//! encodings of normal-classified instances, plus a Euclidean distance test
//! on anomaly-classified ones) that triggers model retraining. A desk-scale
//! hydraulic simulator generates the labeled streams everything is
//! verified against.
//!
//! Start from [`eval::run_pipeline`] for the end-to-end loop, or see the
//! `examples/` directory, one runnable example per subsystem.

pub mod data;
pub mod detector;
pub mod drift;
pub mod error;
pub mod eval;
pub mod hydronet;
pub mod neural;
pub mod preprocess;
pub mod scenario;

pub use error::{Error, Result};
