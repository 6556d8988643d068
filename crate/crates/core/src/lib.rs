//! Neural resonator workbench: modal ground truth, a trainable coefficient
//! predictor and a real-time second-order resonator engine.

pub mod analysis;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod excitation;
pub mod experiments;
pub mod material;
pub mod modal;
pub mod neural;
pub mod pgm;
pub mod resonator;

pub use error::{Error, Result};
