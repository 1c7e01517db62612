//! Real-time nerve-signal decoding for a five-finger prosthetic hand.
//!
//! The crate is organized along the signal path:
//!
//! - [`framing`]: device wire format, emulated devices, multi-device alignment
//! - [`synthgen`]: synthetic recordings with per-finger ground truth
//! - [`dsp`]: filtering, decimation and time-domain feature extraction
//! - [`model`]: convolutional + GRU decoder with training
//! - [`decoder`]: multi-model ensembles producing per-finger predictions
//! - [`pipeline`]: three-stage real-time pipeline and latency measurement
//! - [`handctl`]: hand-controller serial frames and an emulated hand
//! - [`metrics`]: confusion counts, rates and AUC

pub mod error;
pub mod decoder;
pub mod dsp;
pub mod framing;
pub mod handctl;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synthgen;

pub use error::{Error, Result};
