//! Experiment driver: TOML configs, the five subcommands, and run
//! manifests with hashed output inventories.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

use std::path::Path;

use clap::ValueEnum;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult, ExitStatus};
pub use manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Certify,
    Density,
    Sobolev,
    Decay,
    Scan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Density => "density",
            Command::Sobolev => "sobolev",
            Command::Decay => "decay",
            Command::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: ExitStatus,
    pub summary: serde_json::Value,
    pub manifest: RunManifest,
}

/// Runs one subcommand with a resolved config and writes its manifest.
pub fn run(command: Command, cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<RunResult> {
    let started = manifest::now();
    let mut out = output::OutputDir::create(out_dir)?;
    let mut stages = output::Stages::default();
    let outcome = match command {
        Command::Certify => commands::certify(cfg, &mut out, &mut stages)?,
        Command::Density => commands::density(cfg, &mut out, &mut stages)?,
        Command::Sobolev => commands::sobolev(cfg, &mut out, &mut stages)?,
        Command::Decay => commands::decay(cfg, &mut out, &mut stages)?,
        Command::Scan => commands::scan(cfg, &mut out, &mut stages)?,
    };
    let manifest = manifest::finish(&mut out, command.name(), cfg, started, stages, outcome.status)?;
    Ok(RunResult { status: outcome.status, summary: outcome.summary, manifest })
}
