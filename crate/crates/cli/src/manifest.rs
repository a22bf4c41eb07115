use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record written next to every output: what ran, on which bytes, with which
/// settings, and what it produced. Thread counts are deliberately absent
/// because they never change the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<FileRecord>,
    pub config: serde_json::Value,
    pub outputs: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
            config,
            outputs: Vec::new(),
        }
    }

    /// Hashes `path` and records it as given on the command line.
    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileRecord {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Hashes every regular file in `dir` (sorted by name) as an output.
    pub fn collect_outputs(&mut self, dir: &Path) -> Result<(), CliError> {
        let mut names = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let entry = entry.map_err(|e| CliError::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != MANIFEST_NAME && entry.path().is_file() {
                names.push(name);
            }
        }
        names.sort();
        for name in names {
            let sha256 = sha256_file(&dir.join(&name))?;
            self.outputs.push(FileRecord { role: "output".into(), path: name, sha256 });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_NAME);
        fs::write(&path, self.to_json()).map_err(|e| CliError::io(path, e))
    }
}
