//! Asymmetric cross-domain GAN (ADGAN) for four-level financial risk
//! tolerance classification, trained on a small set of consumers with both
//! survey answers and transaction histories plus a large set with
//! transactions only.

pub mod adgan;
pub mod batching;
pub mod cli;
pub mod dataset;
pub mod diffnet;
pub mod error;
pub mod evalmetrics;
pub mod experiment;
pub mod features;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
