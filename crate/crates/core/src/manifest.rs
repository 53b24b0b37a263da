//! Per-stage run records used for resume and retention reporting.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {reason}")]
    Format { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn hash_file(path: impl AsRef<Path>) -> Result<String, ManifestError> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn hash_config<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: impl Into<PathBuf>) -> Result<Self, ManifestError> {
        let path = path.into();
        let sha256 = hash_file(&path)?;
        Ok(Artifact { path, sha256 })
    }

    /// The file still exists with the recorded contents.
    pub fn is_intact(&self) -> bool {
        hash_file(&self.path).is_ok_and(|h| h == self.sha256)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub input_documents: u64,
    pub output_documents: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_time_ms: u64,
    /// Stage-specific report.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl StageManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(|e| ManifestError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Write via a temporary file in the same directory and rename, so a
    /// reader sees either no manifest or a complete one.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        tmp.write_all(&bytes).map_err(io_err(path))?;
        tmp.as_file().sync_all().map_err(io_err(path))?;
        tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
        Ok(())
    }

    /// True when this manifest was produced from the same config and inputs
    /// and its outputs are still on disk unchanged.
    pub fn is_current(&self, config_hash: &str, inputs: &[Artifact]) -> bool {
        self.config_hash == config_hash && self.inputs == inputs && self.outputs.iter().all(Artifact::is_intact)
    }
}
