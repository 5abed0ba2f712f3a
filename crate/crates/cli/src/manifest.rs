use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Record of one command invocation. Artifact paths are relative to the
/// output directory so manifests of identical runs differ only in inputs'
/// locations and `duration_secs`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub configs: Vec<FileDigest>,
    pub data: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            configs: Vec::new(),
            data: Vec::new(),
            artifacts: Vec::new(),
            duration_secs: 0.0,
        }
    }

    pub fn config(&mut self, path: &Path) -> Result<()> {
        self.configs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn data(&mut self, path: &Path) -> Result<()> {
        self.data.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Digests `out_dir/name`, which must already exist.
    pub fn artifact(&mut self, out_dir: &Path, name: &str) -> Result<()> {
        let digest = sha256_file(&out_dir.join(name))?;
        self.artifacts.push(FileDigest {
            path: PathBuf::from(name),
            sha256: digest,
        });
        Ok(())
    }

    pub fn write(mut self, out_dir: &Path, elapsed: Duration) -> Result<()> {
        self.duration_secs = elapsed.as_secs_f64();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        let path = out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(hasher.finalize()))
}
