//! Experiment harness for deep Taylor decomposition on MNIST: training one
//! network per noise level, pattern estimation, single explanations, figure
//! grids, the synthetic pattern-versus-filter lab and a fixture self-test.

pub mod commands;
pub mod config;
pub mod error;
pub mod font;
pub mod render;

pub use config::{ExperimentConfig, TargetChoice};
pub use error::{CliError, Result};
