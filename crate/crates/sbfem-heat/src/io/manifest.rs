//! Run manifests: a JSON record of one invocation (command line, inputs,
//! resolved configuration, outputs, wall time, exit status) written next to
//! the outputs. Re-running the recorded command reproduces the output files
//! byte for byte; the manifest itself is the only file carrying timing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// argv as invoked, including the binary name.
    pub command: Vec<String>,
    /// Input files read (deck paths); empty for built-in cases.
    pub inputs: Vec<String>,
    /// Fully resolved configuration after CLI > deck > default precedence.
    pub config: serde_json::Value,
    /// Output files written, relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
    pub exit_status: i32,
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            inputs: Vec::new(),
            config: serde_json::Value::Null,
            outputs: Vec::new(),
            wall_seconds: 0.0,
            exit_status: 0,
        }
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::config(format!("manifest serialization failed: {e}")))?;
    std::fs::write(path, body + "\n")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!(
        "{}: malformed manifest: {e}",
        path.display()
    )))
}
