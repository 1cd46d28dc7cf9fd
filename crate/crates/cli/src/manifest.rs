//! `run-manifest.json`: what ran, with which settings, on which inputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "run-manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
struct Seeds {
    master: u64,
    embedding: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    config: serde_json::Map<String, serde_json::Value>,
    seeds: Seeds,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn files_under(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            out.extend(files_under(&path)?);
        } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Digest a file, or every file below a directory (manifests excluded).
pub fn digest(path: &Path) -> Result<Vec<InputDigest>> {
    let files = if path.is_dir() { files_under(path)? } else { vec![path.to_path_buf()] };
    files
        .into_iter()
        .map(|f| {
            let bytes = fs::read(&f).with_context(|| format!("cannot read {}", f.display()))?;
            Ok(InputDigest {
                path: f.display().to_string(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            })
        })
        .collect()
}

/// Write the manifest into `dir`.
pub fn write(dir: &Path, command: &str, config: &RunConfig, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    let mut digests = Vec::new();
    for p in inputs {
        digests.extend(digest(p)?);
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        argv: std::env::args().collect(),
        config: config
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect(),
        seeds: Seeds {
            master: config.seed,
            embedding: config.embedding_seed,
        },
        inputs: digests,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Directory that holds an output file.
pub fn dir_of(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}
