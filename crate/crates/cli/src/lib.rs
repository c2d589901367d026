//! Command-line driver for `stroboreset-core`: config parsing, CSV output and
//! one subcommand per workflow.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use commands::{CliError, ExitStatus};
use config::{apply_worker_override, parse_config, ConfigError, RunConfig};

pub const WORKERS_ENV: &str = "STROBORESET_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "stroboreset", version, about = "Fixed points and thermodynamics of coherence-selective stroboscopic resets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `key = value` config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV path (overrides `output` in the config)
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Observables at a single (tau, eta, mu, omega0) point
    FixedPoint,
    /// Observables over a (tau, eta, mu, omega0) grid
    Sweep,
    /// Mode-resolved fixed-point coherences with the small-tau guide
    Spectrum,
    /// eta maximizers of j_q, c_se and r_eff per reset interval
    OperatingPoints,
    /// Observables over a chemical-potential grid
    MuSweep,
    /// Truncation study: repeat a point with the bath size doubled
    Converge,
    /// Oracle and invariant self-checks
    Validate,
}

pub fn load_config(path: Option<&Path>, output: Option<PathBuf>, workers_env: Option<String>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    apply_worker_override(&mut cfg, workers_env)?;
    if output.is_some() {
        cfg.output_path = output;
    }
    Ok(cfg)
}

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    match command {
        Command::FixedPoint => commands::cmd_fixed_point(cfg),
        Command::Sweep => commands::cmd_sweep(cfg),
        Command::Spectrum => commands::cmd_spectrum(cfg),
        Command::OperatingPoints => commands::cmd_operating_points(cfg),
        Command::MuSweep => commands::cmd_mu_sweep(cfg),
        Command::Converge => commands::cmd_converge(cfg),
        Command::Validate => commands::cmd_validate(cfg),
    }
}

/// Loads the config, runs the command and reports errors on stderr.
pub fn run(cli: Cli) -> ExitStatus {
    let result = load_config(cli.config.as_deref(), cli.output, std::env::var(WORKERS_ENV).ok())
        .and_then(|cfg| dispatch(cli.command, &cfg));
    match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    }
}
