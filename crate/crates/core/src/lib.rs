//! Activation-pattern overfitting indicator (OUI) and the small training
//! engine used to study it against L2 weight decay.
//!
//! - [`tensor`]: row-major `f64` tensors and the seeded RNG stream
//! - [`network`]: dense/conv ReLU-family networks, pattern capture, backprop
//! - [`optim`]: SGD with momentum and learning-rate schedules
//! - [`oui`]: Hamming-distance indicator, sampled estimator, regimes
//! - [`data`]: synthetic blobs, label corruption, batching
//! - [`harness`]: training loop, weight-decay sweeps, recommendation, reports

pub mod data;
pub mod error;
pub mod harness;
pub mod network;
pub mod optim;
pub mod oui;
pub mod pattern;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use pattern::{ActivationRecord, PatternMatrix};
pub use tensor::{RngStream, Tensor};
