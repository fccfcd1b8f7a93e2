//! Input hashing, run metadata and output writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A file read once, remembered with its content hash.
pub struct Input {
    pub text: String,
    pub sha256: String,
}

impl Input {
    pub fn read(path: &Path) -> Result<Input, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let sha256 = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Input { text, sha256 })
    }
}

/// Metadata embedded in every output: command, resolved configuration and
/// input hashes. Paths are left out so that outputs depend on content only.
pub struct Meta {
    command: &'static str,
    config: Value,
    inputs: serde_json::Map<String, Value>,
}

impl Meta {
    pub fn new(command: &'static str, config: &impl Serialize) -> Result<Meta, CliError> {
        Ok(Meta {
            command,
            config: serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?,
            inputs: Default::default(),
        })
    }

    pub fn input(mut self, role: &str, input: &Input) -> Meta {
        self.inputs.insert(role.into(), json!({ "sha256": input.sha256 }));
        self
    }

    /// Adds a configuration value resolved after parsing.
    pub fn resolved(mut self, key: &str, value: impl Serialize) -> Meta {
        if let Value::Object(map) = &mut self.config {
            map.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
        }
        self
    }

    pub fn to_value(&self) -> Value {
        json!({
            "tool": "wtpgmr",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
        })
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// CSV with a leading `# meta {...}` comment line.
pub fn write_csv(
    path: &Path,
    meta: &Meta,
    body: impl FnOnce(&mut Vec<u8>) -> wtpgmr::Result<()>,
) -> Result<(), CliError> {
    let mut buf = format!("# meta {}\n", meta.to_value()).into_bytes();
    body(&mut buf)?;
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

/// `report.json` → `report.<suffix>.csv` in the same directory.
pub fn sibling(report: &Path, suffix: &str) -> PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}.{suffix}.csv"))
}
