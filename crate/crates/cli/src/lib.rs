//! Command-line driver: configuration, run orchestration and persistence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] epsharm::Error),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Run(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Sequence,
    Synth,
    Analyze,
    Verify,
    Report,
}

/// Runs one command; the output directory comes from the config.
pub fn run(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Solve => commands::solve(cfg),
        Command::Sequence => commands::sequence(cfg),
        Command::Synth => commands::synth(cfg),
        Command::Analyze => commands::analyze(cfg),
        Command::Verify => commands::verify(cfg),
        Command::Report => commands::report(cfg),
    }
}
