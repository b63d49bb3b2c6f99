use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use zeno_rotor_cli::{parse_config, run_experiment, write_artifacts, ResolvedConfig};

/// Quantum Zeno and kicked-rotor measurement experiments.
#[derive(Debug, Parser)]
#[command(name = "zeno-rotor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a TOML configuration.
    Run { config: PathBuf },
    /// Check a configuration and print it with all defaults filled in.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ResolvedConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let resolved = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    for warning in &resolved.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(resolved)
}

/// Relative output directories are taken from the configuration file's location.
fn output_directory(config_path: &Path, resolved: &ResolvedConfig) -> PathBuf {
    let directory = &resolved.config.output.directory;
    if directory.is_absolute() {
        directory.clone()
    } else {
        config_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(directory)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let resolved = load(&config)?;
            let report = run_experiment(&resolved)?;
            for warning in report.meta.warnings.iter().skip(resolved.warnings.len()) {
                eprintln!("warning: {warning}");
            }
            for path in write_artifacts(&report, &output_directory(&config, &resolved))? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let resolved = load(&config)?;
            print!("{}", toml::to_string(&resolved.config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
