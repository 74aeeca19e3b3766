use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Everything needed to regenerate a run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: &impl Serialize, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            parameters: serde_json::to_value(parameters).unwrap_or(Value::Null),
            seed,
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Collects output files of one run and writes the manifest next to them.
pub struct OutputSet {
    manifest: RunManifest,
    manifest_path: PathBuf,
}

impl OutputSet {
    /// Single-file output; the manifest goes to `<file>.manifest.json`.
    pub fn for_file(manifest: RunManifest, file: &Path) -> Self {
        let mut name = file.as_os_str().to_owned();
        name.push(".manifest.json");
        Self {
            manifest,
            manifest_path: PathBuf::from(name),
        }
    }

    /// Directory output; the manifest goes to `<dir>/manifest.json`.
    pub fn for_dir(manifest: RunManifest, dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            manifest,
            manifest_path: dir.join("manifest.json"),
        })
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn finish(self) -> Result<(), CliError> {
        let text = to_json(&self.manifest)?;
        fs::write(&self.manifest_path, text).map_err(|e| CliError::io(&self.manifest_path, e))
    }
}

pub fn to_json(value: &impl Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("json encoding failed: {e}")))?;
    s.push('\n');
    Ok(s)
}
