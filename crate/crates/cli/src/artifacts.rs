//! Output files, hashing, and the run manifest.
//!
//! Every command records what it wrote: the manifest maps each emitted file
//! to a sha256 of its exact bytes, alongside the resolved arguments and every
//! seed in play. Re-running a command with identical inputs must reproduce
//! identical hashes; all JSON goes through the canonical renderer (sorted
//! keys, 17-significant-digit floats) to make that hold across platforms.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use racer_core::canonical::to_canonical_string;

/// Collects emitted files and writes the manifest at the end of a command.
pub struct ArtifactWriter {
    command: String,
    arguments: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
    hashes: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    arguments: &'a BTreeMap<String, String>,
    seeds: &'a BTreeMap<String, u64>,
    artifact_hashes: &'a BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            arguments: BTreeMap::new(),
            seeds: BTreeMap::new(),
            hashes: BTreeMap::new(),
        }
    }

    /// Record a resolved argument value.
    pub fn arg(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.arguments.insert(key.to_string(), value.to_string());
        self
    }

    /// Record an optional argument when present.
    pub fn arg_opt(&mut self, key: &str, value: Option<impl ToString>) -> &mut Self {
        if let Some(v) = value {
            self.arg(key, v);
        }
        self
    }

    /// Record a named seed.
    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    /// Write bytes to `path`, creating parent directories, and record the
    /// file's hash.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating directory {}", parent.display()))?;
            }
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let digest = Sha256::digest(bytes);
        self.hashes.insert(
            path.display().to_string(),
            format!("sha256:{}", hex::encode(digest)),
        );
        Ok(())
    }

    /// Write a value as canonical JSON.
    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = to_canonical_string(value).context("serializing output")?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    /// Write canonical JSONL, one value per line.
    pub fn write_jsonl<T: Serialize>(&mut self, path: &Path, values: &[T]) -> Result<()> {
        let mut text = String::new();
        for value in values {
            text.push_str(&to_canonical_string(value).context("serializing output line")?);
            text.push('\n');
        }
        self.write(path, text.as_bytes())
    }

    /// Emit the manifest next to the primary output (`<out>.manifest.json`).
    pub fn finish(self, primary_out: &Path) -> Result<PathBuf> {
        let manifest_path = manifest_path_for(primary_out);
        let manifest = RunManifest {
            command: &self.command,
            arguments: &self.arguments,
            seeds: &self.seeds,
            artifact_hashes: &self.hashes,
        };
        let mut text = to_canonical_string(&manifest).context("serializing manifest")?;
        text.push('\n');
        fs::write(&manifest_path, text)
            .with_context(|| format!("writing {}", manifest_path.display()))?;
        Ok(manifest_path)
    }
}

/// Manifest path convention: append `.manifest.json` to the primary output.
pub fn manifest_path_for(primary_out: &Path) -> PathBuf {
    let mut name = primary_out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}
