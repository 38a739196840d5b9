//! `run.json`: what was run, on which inputs, producing which outputs.
//!
//! Everything except `started_unix_ms` and `wall_clock_seconds` is a pure
//! function of the flags and inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub digest: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: BTreeMap<String, InputRecord>,
    /// Output name to content digest.
    pub outputs: BTreeMap<String, String>,
    pub started_unix_ms: u128,
    pub wall_clock_seconds: f64,
}

/// Collects a [`RunManifest`] while a command runs.
pub struct RunRecorder {
    manifest: RunManifest,
    clock: Instant,
}

impl RunRecorder {
    pub fn start(command: &str, config: Value, seed: Option<u64>) -> Self {
        let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config,
                seed,
                threads: rayon::current_num_threads(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                started_unix_ms,
                wall_clock_seconds: 0.0,
            },
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path, digest: String) {
        self.manifest.inputs.insert(name.to_string(), InputRecord { path: path.display().to_string(), digest });
    }

    pub fn output(&mut self, name: &str, digest: String) {
        self.manifest.outputs.insert(name.to_string(), digest);
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<(), CliError> {
        self.manifest.wall_clock_seconds = self.clock.elapsed().as_secs_f64();
        write_json(&out_dir.join(RUN_FILE), &self.manifest)?;
        Ok(())
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: PathBuf::from(path), source }
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// Pretty JSON with a trailing newline. Returns the content digest.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<String, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
