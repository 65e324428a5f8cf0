//! Config parsing and command implementations behind the `holes` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_capacity, cmd_spectrum, cmd_sweep, CliError, Report};
pub use config::{ConfigError, HoleSpec, ManifoldSpec, RunConfig};
