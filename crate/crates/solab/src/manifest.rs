use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, ExitStatus};
use crate::output::{sha256_hex, FileEntry, OutputDir, StageTime, Stages, MANIFEST_NAME};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    /// SHA-256 of the resolved config serialised as JSON.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub started_at: String,
    pub finished_at: String,
    pub stages: Vec<StageTime>,
    pub status: String,
    pub exit_code: i32,
    pub removed_stale: Vec<String>,
    pub files: Vec<FileEntry>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> CliResult<String> {
    let text = serde_json::to_string(cfg).map_err(|e| CliError::Other(e.to_string()))?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn status_label(status: ExitStatus) -> &'static str {
    match status {
        ExitStatus::Success => "success",
        ExitStatus::Io => "io-error",
        ExitStatus::Schema => "schema-error",
        ExitStatus::BudgetLimited => "budget-limited",
        ExitStatus::GuardTripped => "guard-tripped",
        ExitStatus::NotCertified => "not-certified",
    }
}

/// Writes `manifest.json` after dropping files left over from an earlier run.
pub fn finish(
    out: &mut OutputDir,
    command: &str,
    cfg: &ExperimentConfig,
    started_at: String,
    stages: Stages,
    status: ExitStatus,
) -> CliResult<RunManifest> {
    let removed_stale = out.remove_stale()?;
    let manifest = RunManifest {
        command: command.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(cfg)?,
        config: cfg.clone(),
        started_at,
        finished_at: now(),
        stages: stages.list,
        status: status_label(status).to_string(),
        exit_code: status.code(),
        removed_stale,
        files: out.inventory()?,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))? + "\n";
    let path = out.root().join(MANIFEST_NAME);
    std::fs::write(&path, text).map_err(|e| CliError::io(path.display(), e))?;
    Ok(manifest)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}
