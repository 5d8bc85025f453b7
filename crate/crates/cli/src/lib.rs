//! Command-line harness for the diffusion decoder and its baselines.

pub mod commands;
pub mod config;
pub mod predictions;
pub mod verify;

pub use commands::{CliError, CliResult};
pub use config::{Overrides, RunConfig};
