//! Result records, artifacts and machine-readable errors.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Exit status for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures while running a command.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub details: Value,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: "config", message: message.into(), details: Value::Null }
    }

    pub fn missing_file(path: &Path) -> Self {
        Self { kind: "missing_file", message: format!("{} does not exist", path.display()), details: Value::Null }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "config" | "usage" | "missing_file" => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }

    pub fn to_json(&self, command: &str) -> Value {
        let mut error = json!({ "command": command, "kind": self.kind, "message": self.message });
        if !self.details.is_null() {
            error["details"] = self.details.clone();
        }
        json!({ "error": error })
    }
}

impl From<fbcap::Error> for CliError {
    fn from(e: fbcap::Error) -> Self {
        use fbcap::Error as E;
        let kind = match &e {
            E::InvalidAlphabet(_) => "invalid_alphabet",
            E::Shape(_) => "shape",
            E::ImpossibleObservation(_) => "impossible_observation",
            E::InvalidChannel(_) => "invalid_channel",
            E::NumericFailure { .. } => "numeric_failure",
            E::Domain(_) => "domain",
            E::Determinism(_) => "qgraph_determinism",
            E::Coverage(_) => "qgraph_coverage",
            E::Corruption(_) => "corruption",
            E::NotUnimodal(_) => "not_unimodal",
            E::NonConvergence(_) => "non_convergence",
            E::Parse(_) => "parse",
            E::Io(_) => "io",
            E::Json(_) => "json",
        };
        let details = match &e {
            E::Coverage(pairs) => json!({ "missing": pairs }),
            E::InvalidChannel(v) => json!({ "violations": v }),
            E::NumericFailure { layer } => json!({ "layer": layer }),
            _ => Value::Null,
        };
        Self { kind, message: e.to_string(), details }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        fbcap::Error::Io(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        fbcap::Error::Json(e).into()
    }
}

/// Hex SHA-256 of the config's JSON form.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes a command's files under the output directory and keeps the list.
pub struct Outputs {
    dir: PathBuf,
    command: &'static str,
    artifacts: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path, command: &'static str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), command, artifacts: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::write(&path, contents)?;
        self.artifacts.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Write `<command>.json` and its `<command>.meta.json` sidecar. The
    /// record holds no wall-clock data, so reruns reproduce it byte for
    /// byte; the timestamp lives in the sidecar.
    pub fn finish<T: Serialize>(mut self, config: &ExperimentConfig, result: &T) -> Result<Value, CliError> {
        let hash = config_hash(config);
        let record = json!({
            "command": self.command,
            "seed": config.seed,
            "config_hash": hash,
            "config": config,
            "result": result,
            "artifacts": self.artifacts,
        });
        let name = format!("{}.json", self.command);
        self.write_json(&name, &record)?;
        let meta = json!({
            "command": self.command,
            "config_hash": hash,
            "timestamp": chrono::Utc::now().to_rfc3339(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        self.write_json(&format!("{}.meta.json", self.command), &meta)?;
        Ok(record)
    }
}
