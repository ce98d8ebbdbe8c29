use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use solab_core::transfer::GridDensity;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Output directory of one run; remembers every file written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Serialize)]
struct DensityHeader<'a> {
    quantity: &'static str,
    dtype: &'static str,
    order: &'static str,
    dims: Vec<usize>,
    nx: &'a [usize],
    ny: &'a [usize],
    k0: f64,
    cell_volume: f64,
    total_mass: f64,
    data_file: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root.display(), e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(path.display(), e))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| CliError::Other(e.to_string());
        w.write_record(header).map_err(to_err)?;
        for row in rows {
            w.write_record(&row).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Cell masses as little-endian f64 in `<stem>.bin`, described by `<stem>.json`.
    pub fn write_density(&mut self, stem: &str, density: &GridDensity) -> CliResult<()> {
        let bytes: Vec<u8> = density.mass.iter().flat_map(|m| m.to_le_bytes()).collect();
        let data_file = format!("{stem}.bin");
        self.write_bytes(&data_file, &bytes)?;
        let g = &density.grid;
        let header = DensityHeader {
            quantity: "cell mass",
            dtype: "f64-le",
            order: "row-major, x axes first, last y axis fastest",
            dims: g.dims(),
            nx: &g.nx,
            ny: &g.ny,
            k0: g.k0,
            cell_volume: g.cell_volume(),
            total_mass: density.total(),
            data_file,
        };
        self.write_json(&format!("{stem}.json"), &header)
    }

    /// Hashes of every written file, sorted by name.
    pub fn inventory(&self) -> CliResult<Vec<FileEntry>> {
        let mut names = self.written.clone();
        names.sort();
        names
            .into_iter()
            .map(|name| {
                let path = self.root.join(&name);
                let bytes = std::fs::read(&path).map_err(|e| CliError::io(path.display(), e))?;
                Ok(FileEntry { bytes: bytes.len() as u64, sha256: sha256_hex(&bytes), path: name })
            })
            .collect()
    }

    /// Removes files listed by a previous manifest that this run did not write.
    pub fn remove_stale(&self) -> CliResult<Vec<String>> {
        let path = self.root.join(MANIFEST_NAME);
        let Ok(text) = std::fs::read_to_string(&path) else { return Ok(Vec::new()) };
        let Ok(old) = serde_json::from_str::<serde_json::Value>(&text) else { return Ok(Vec::new()) };
        let old_files: Vec<FileEntry> = old
            .get("files")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .unwrap_or_default();
        let mut removed = Vec::new();
        for f in old_files {
            if self.written.contains(&f.path) || f.path.contains('/') || f.path.contains("..") {
                continue;
            }
            let p = self.root.join(&f.path);
            if p.is_file() {
                std::fs::remove_file(&p).map_err(|e| CliError::io(p.display(), e))?;
                removed.push(f.path);
            }
        }
        Ok(removed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub name: String,
    pub seconds: f64,
}

/// Wall-clock per named stage.
#[derive(Debug, Default)]
pub struct Stages {
    pub list: Vec<StageTime>,
}

impl Stages {
    pub fn run<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.list.push(StageTime { name: name.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}
