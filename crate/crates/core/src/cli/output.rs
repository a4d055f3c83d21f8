//! Run directory: every artifact goes through one writer so the manifest can
//! list it with its hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::lattice::Field;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// One pass/fail flag of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// The property being checked.
    pub invariant: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, invariant: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            invariant: invariant.to_string(),
            pass,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: Value,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub results: Value,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
    /// Timing only; excluded from reproducibility comparisons.
    pub wall_clock: Value,
}

pub struct RunWriter {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunWriter {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `rel` (slash-separated, relative to the run root).
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn write_field(&mut self, rel: &str, field: &Field) -> Result<(), CliError> {
        self.write(rel, field.to_dump_string().as_bytes())
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<(), CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = self.files.clone();
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
