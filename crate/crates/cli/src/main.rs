use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use epsharm_cli::{run, Command, RunConfig};

/// Experiments with ε-harmonic maps into the round sphere.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    command: Command,
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.config)
        .map_err(epsharm_cli::CliError::from)
        .and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
