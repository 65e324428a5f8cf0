use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use holes_cli::{cmd_capacity, cmd_spectrum, cmd_sweep, CliError, Report, RunConfig};

#[derive(Parser)]
#[command(name = "holes", version, about = "Schrödinger spectra on rings and tori with Dirichlet holes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of the full manifold and of each configured hole.
    Spectrum(Args),
    /// Schrödinger capacity and Poincaré slack of each configured hole.
    Capacity(Args),
    /// Bound sweep over the configured radii, written as CSV.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    config: PathBuf,
    /// Overrides `run.output`.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<Result<Report, CliError>> {
    let args = match &cli.command {
        Command::Spectrum(a) | Command::Capacity(a) | Command::Sweep(a) => a,
    };
    let cfg = match RunConfig::from_path(&args.config) {
        Ok(c) => c,
        Err(e) => return Ok(Err(e.into())),
    };
    log::debug!("normalized config:\n{}", cfg.to_toml_string());
    let result = match &cli.command {
        Command::Spectrum(_) => cmd_spectrum(&cfg),
        Command::Capacity(_) => cmd_capacity(&cfg),
        Command::Sweep(a) => return Ok(cmd_sweep(&cfg, a.output.clone()).map(|(report, _)| report)),
    };
    if let (Ok(report), Some(path)) = (&result, &args.output) {
        fs::write(path, &report.text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(result)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Ok(report)) => {
            print!("{}", report.text);
            if report.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("one or more checks failed");
                ExitCode::from(1)
            }
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
