//! Configuration handling and subcommand bodies behind the `nwa` binary.

pub mod commands;
pub mod config;

pub use config::{ConfigError, RunConfig};
