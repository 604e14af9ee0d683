//! Provenance header embedded in every result file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the config file bytes.
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
    /// Logical CPUs of the machine that produced the file.
    pub host_parallelism: usize,
}

impl RunManifest {
    pub fn new(command: &str, config_bytes: &[u8], seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_digest: hex_digest(config_bytes),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            host_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `<dir>/<stem>.csv` with the manifest as a leading `#` line.
pub fn write_csv<T: Serialize>(dir: &Path, stem: &str, manifest: &RunManifest, rows: &[T]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{stem}.csv"));
    fs::write(&path, csv_text(manifest, rows)?)?;
    Ok(path)
}

/// Writes `<dir>/<stem>.json` as `{"manifest": …, "rows": …}`.
pub fn write_json<T: Serialize + ?Sized>(dir: &Path, stem: &str, manifest: &RunManifest, rows: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{stem}.json"));
    let doc = serde_json::json!({ "manifest": manifest, "rows": rows });
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(path)
}

pub fn csv_text<T: Serialize>(manifest: &RunManifest, rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    Ok(format!("# manifest {}\n{body}", serde_json::to_string(manifest)?))
}

/// CSV text without the manifest line, for replay comparisons.
pub fn data_rows(csv: &str) -> String {
    csv.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}
