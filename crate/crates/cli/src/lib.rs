//! `metapmp` command-line pipeline: level-2 simulation, meta-model fits and
//! the predictive mixture, driven by a TOML configuration.

pub mod commands;
pub mod config;

use std::fmt;

pub use commands::{run, Cli, Command};
pub use config::{MixtureConfig, ModelSpec, PipelineConfig};

/// Invalid configuration or arguments (exit code 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Maps an error to the process exit code: 2 for configuration problems,
/// 3 for failures at run time.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        2
    } else {
        3
    }
}
