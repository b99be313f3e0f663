//! Serialized output stage and run manifests.
//!
//! Commands stage their artifacts in memory; [`OutputStage::commit`] writes
//! them in order together with `run.json`, which lists a SHA-256 per file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::config_digest;

pub const MANIFEST: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_digest: String,
    /// Everything the digest was computed from.
    pub provenance: serde_json::Value,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct OutputStage {
    dir: PathBuf,
    command: String,
    provenance: serde_json::Value,
    digest: String,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputStage {
    pub fn new(dir: PathBuf, command: &str, provenance: serde_json::Value) -> Result<Self> {
        let digest = config_digest(&provenance)?;
        Ok(Self { dir, command: command.to_string(), provenance, digest, files: Vec::new() })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Stages a value produced by a writer closure.
    pub fn add_with(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir)?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes)?;
            entries.push(ManifestEntry { name: name.clone(), sha256: sha256_hex(bytes) });
            written.push(path);
        }
        let manifest = Manifest {
            command: self.command,
            config_digest: self.digest,
            provenance: self.provenance,
            files: entries,
        };
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub command: String,
    pub config_digest: String,
    pub checked: Vec<String>,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Re-hashes every file listed in `dir/run.json`, checks that each embeds the
/// run's digest and that the digest matches the recorded provenance.
pub fn verify_dir(dir: &Path) -> Result<VerifyReport> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", dir.join(MANIFEST).display())))?;
    let mut problems = Vec::new();
    let recomputed = config_digest(&manifest.provenance)?;
    if recomputed != manifest.config_digest {
        problems.push(format!(
            "manifest digest {} does not match its provenance ({recomputed})",
            manifest.config_digest
        ));
    }
    let mut checked = Vec::new();
    for entry in &manifest.files {
        if entry.name.contains('/') || entry.name.contains('\\') || entry.name == ".." {
            problems.push(format!("{}: unexpected path in manifest", entry.name));
            continue;
        }
        let bytes = match std::fs::read(dir.join(&entry.name)) {
            Ok(b) => b,
            Err(e) => {
                problems.push(format!("{}: {e}", entry.name));
                continue;
            }
        };
        if sha256_hex(&bytes) != entry.sha256 {
            problems.push(format!("{}: content hash mismatch", entry.name));
        }
        if !embeds_digest(&bytes, &manifest.config_digest) {
            problems.push(format!("{}: config_digest not embedded", entry.name));
        }
        checked.push(entry.name.clone());
    }
    Ok(VerifyReport { command: manifest.command, config_digest: manifest.config_digest, checked, problems })
}

fn embeds_digest(bytes: &[u8], digest: &str) -> bool {
    let text = String::from_utf8_lossy(bytes);
    text.contains(&format!("config_digest={digest}")) || text.contains(&format!("\"config_digest\": \"{digest}\""))
}
