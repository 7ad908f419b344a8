//! Command-line plumbing: run configuration and subcommands.

pub mod commands;
pub mod config;

pub use commands::{run, Command};
pub use config::{ConfigError, RunConfig};
