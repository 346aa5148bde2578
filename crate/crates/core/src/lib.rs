//! Bias-aware keyword-spotting experimentation toolkit.

pub mod config;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod pruning;
pub mod rng;
pub mod selection;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Executor;
