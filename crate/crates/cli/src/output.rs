//! Atomic output directories with a reproducibility manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub bytes: u64,
    pub crc32: String,
}

impl InputRecord {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let data = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(InputRecord {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            crc32: format!("{:08x}", crc32(&data)),
        })
    }
}

fn crc32(data: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(data);
    h.finalize()
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub inputs: Vec<InputRecord>,
    pub config: Option<String>,
    pub seed: u64,
    pub output: String,
    /// Effective settings after defaults and flags.
    pub settings: serde_json::Value,
    pub artifacts: Vec<String>,
}

/// Files are staged in a hidden sibling directory and moved into place in
/// one rename once everything, manifest included, is written.
pub struct OutputDir {
    target: PathBuf,
    staging: tempfile::TempDir,
    artifacts: Vec<String>,
}

impl OutputDir {
    pub fn create(target: &Path) -> Result<Self, CliError> {
        if target.exists() {
            let is_ours = target.is_dir() && target.join(MANIFEST).is_file();
            let is_empty = target.is_dir() && fs::read_dir(target).map(|mut d| d.next().is_none()).unwrap_or(false);
            if !is_ours && !is_empty {
                return Err(CliError::usage(format!(
                    "{} exists and is not a previous pdt output directory",
                    target.display()
                )));
            }
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
        let staging = tempfile::Builder::new()
            .prefix(".pdt-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
        Ok(OutputDir {
            target: target.to_path_buf(),
            staging,
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.staging.path().join(name);
        let mut f = fs::File::create(&path).map_err(|e| CliError::input(format!("{name}: {e}")))?;
        f.write_all(bytes).map_err(|e| CliError::input(format!("{name}: {e}")))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn commit(mut self, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
        self.artifacts.sort();
        manifest.artifacts = self.artifacts.clone();
        manifest.output = self.target.display().to_string();
        self.write_json(MANIFEST, &manifest)?;
        let staged = self.staging.keep();
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| CliError::input(format!("{}: {e}", self.target.display())))?;
        }
        fs::rename(&staged, &self.target).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            CliError::input(format!("{}: {e}", self.target.display()))
        })?;
        Ok(self.target)
    }
}
