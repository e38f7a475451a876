//! Run manifests: what was run, with which seeds, and digests of every file
//! read or written.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use ctxrand::io::sha256_file;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory for outputs; as given for inputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: String,
    pub device: String,
    pub extractor: String,
}

/// Headline numbers of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accepted: Option<bool>,
    pub g: Option<f64>,
    pub sigma_g: Option<f64>,
    pub certified_r_gen: Option<f64>,
    pub certified_min_entropy: Option<f64>,
    pub net_bits: Option<f64>,
    /// Set when extraction used an assumed rather than certified rate.
    pub assumed_rate: Option<f64>,
    pub extracted_bits: Option<usize>,
    pub battery_passed: Option<bool>,
    pub exit_status: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved configuration, as TOML.
    pub config: String,
    pub seeds: SeedRecord,
    pub versions: Vec<(String, String)>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub summary: Summary,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn versions() -> Vec<(String, String)> {
    vec![
        ("ctxrand".to_string(), ctxrand::VERSION.to_string()),
        ("ctxrand-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ]
}

/// Digest of a file, recorded relative to `base` when it lies inside it.
pub fn digest(path: &Path, base: &Path) -> Result<FileDigest> {
    let sha256 = sha256_file(path).with_context(|| format!("hashing {}", path.display()))?;
    let rel = path.strip_prefix(base).unwrap_or(path);
    Ok(FileDigest {
        path: rel.to_string_lossy().into_owned(),
        sha256,
    })
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_slice(&text)?)
    }
}

/// Check that every output listed in the manifest exists and matches its
/// digest.
pub fn verify_manifest(path: &Path) -> Result<RunManifest> {
    let manifest = RunManifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for out in &manifest.outputs {
        let file = base.join(&out.path);
        if !file.exists() {
            bail!("manifest output {} is missing", out.path);
        }
        let found = sha256_file(&file)?;
        if found != out.sha256 {
            bail!(
                "manifest output {} has digest {found}, expected {}",
                out.path,
                out.sha256
            );
        }
    }
    Ok(manifest)
}
