use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use solab::{run, Command, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "solab", version, about = "Experiments on skew-product solenoidal attractors")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for every stochastic stage.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> solab::CliResult<i32> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| solab::CliError::Other(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    cfg.resolve(cli.seed);
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("solab-out").join(cli.command.name()));
    let result = run(cli.command, &cfg, &out)?;
    println!(
        "{} {} -> {} ({})",
        cli.command.name(),
        result.manifest.status,
        out.display(),
        serde_json::to_string(&result.summary).unwrap_or_default()
    );
    Ok(result.status.code())
}
