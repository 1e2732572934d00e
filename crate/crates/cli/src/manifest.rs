//! Run settings and the manifest written next to every output.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mmtensor::evaluation::ProtocolConfig;
use mmtensor::GraphConfig;

use crate::UsageError;

/// Everything besides the command-line flags that shapes a run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub graph: GraphConfig,
    /// Min-max scale ADAS13 and MMSE over the cohort instead of the
    /// instrument range.
    pub cohort_min_max: bool,
    pub protocol: ProtocolConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Record sufficient to re-run a command: its arguments, the resolved
/// settings and the digests of every input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub settings: Settings,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Manifest {
    pub fn start(command: &str, settings: &Settings) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            seed: settings.seed,
            settings: settings.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            finished_unix: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputFile {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn finish(&mut self) {
        self.seed = self.settings.seed;
        self.finished_unix = now();
    }
}

/// Read settings from TOML or JSON (by extension). A JSON manifest from an
/// earlier run contributes its `settings`.
pub fn load_settings(path: &Path) -> Result<Settings> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let bad = |e: String| UsageError(format!("invalid config {}: {e}", path.display()));
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let settings: Settings = if is_json {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let inner = match value.get("settings") {
            Some(s) if value.get("command").is_some() => s.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| bad(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))?
    };
    settings.graph.validate().map_err(|e| bad(e.to_string()))?;
    settings.protocol.validate().map_err(|e| bad(e.to_string()))?;
    Ok(settings)
}
