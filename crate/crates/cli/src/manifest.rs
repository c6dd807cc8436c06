use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use dpllsim_core::export::CSV_SCHEMA_VERSION;
use dpllsim_core::SimConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    /// CSV schema name: `bode`, `vna`, `counter`, `psd` or `trace`.
    pub schema: &'static str,
    pub bytes: u64,
    pub sha256: String,
}

/// One run's provenance record, written next to its CSV files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub csv_schema_version: u32,
    pub artifact_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub noise_seeds: Vec<u64>,
    pub config: SimConfig,
    pub outputs: Vec<OutputFile>,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
}

/// `manifest_<command>.json`, so runs of different commands can share a
/// directory without one manifest losing track of another's files.
pub fn manifest_name(command: &str) -> String {
    format!("manifest_{command}.json")
}

fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files of one run and writes the manifest last.
pub struct RunRecorder {
    dir: PathBuf,
    command: String,
    started: SystemTime,
    clock: Instant,
    outputs: Vec<OutputFile>,
}

impl RunRecorder {
    pub fn new(dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            started: SystemTime::now(),
            clock: Instant::now(),
            outputs: Vec::new(),
        })
    }

    /// Writes `name` in the output directory from the bytes `fill` produces.
    pub fn write<F>(&mut self, name: &str, schema: &'static str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> dpllsim_core::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("formatting {name}"))?;
        let path = self.dir.join(name);
        fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            schema,
            bytes: buf.len() as u64,
            sha256: sha256_hex(&buf),
        });
        Ok(path)
    }

    pub fn finish(self, seed: u64, config: &SimConfig) -> Result<PathBuf> {
        let manifest = RunManifest {
            csv_schema_version: CSV_SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed,
            noise_seeds: config.noise.iter().map(|n| n.seed).collect(),
            config: config.clone(),
            outputs: self.outputs,
            started_unix_s: self.started.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
            wall_clock_s: self.clock.elapsed().as_secs_f64(),
        };
        let path = self.dir.join(manifest_name(&manifest.command));
        let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(path)
    }
}
