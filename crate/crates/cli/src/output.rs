use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, RunManifest};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Destination directory for one run. Every file goes through one writer
/// call, so each output is produced by a single sink.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
        let path = self.path(name);
        let csv_err = |source| CliError::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes a CSV that has a header even when there are no rows.
    pub fn write_csv_with_header<T: Serialize>(&self, name: &str, header: &[&str], rows: Vec<T>) -> CliResult<()> {
        if rows.is_empty() {
            return self.write_bytes(name, format!("{}\n", header.join(",")).as_bytes());
        }
        self.write_csv(name, rows)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json {
            path: self.path(name),
            source,
        })?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes the manifest and returns the SHA-256 of its bytes, which reports
    /// embed to point back at it.
    pub fn write_manifest(&self, manifest: &RunManifest) -> CliResult<String> {
        self.write_json(MANIFEST_FILE, manifest)?;
        let path = self.path(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|source| CliError::Io { path, source })?;
        Ok(sha256_hex(&bytes))
    }
}

pub fn read_manifest(path: &Path) -> CliResult<RunManifest> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}
