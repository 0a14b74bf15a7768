//! Wearable-sensor motion capture, end to end and desk-scale: synthetic
//! multimodal sensor generation, stream synchronization and alignment, a
//! teacher-student neural estimator of 24-joint body motion, and the full
//! evaluation metric suite.
//!
//! The `examples/` directory is the front door: one runnable example per
//! major capability. The `wearmocap` binary wires the same functionality
//! into file-based subcommands.

pub mod body;
pub mod capture;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rotmath;
pub mod streams;
pub mod util;
pub mod synth;

pub use error::{Error, Result};
