use crate::manifest::Loaded;
use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamped into every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub kind: String,
    pub manifest_hash: String,
    pub seed: u64,
    pub code_version: String,
}

impl ArtifactMeta {
    pub fn new(kind: &str, loaded: &Loaded, seed: u64) -> Self {
        Self { kind: kind.into(), manifest_hash: loaded.hash.clone(), seed, code_version: CODE_VERSION.into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub meta: ArtifactMeta,
    pub data: T,
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub fn write<T: Serialize>(path: &Path, meta: ArtifactMeta, data: &T) -> Result<()> {
    create_parent(path)?;
    let mut bytes = serde_json::to_vec(&Artifact { meta, data })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Artifact<T>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Reads an artifact and insists it came from the current manifest.
pub fn read_checked<T: DeserializeOwned>(path: &Path, loaded: &Loaded) -> Result<Artifact<T>> {
    let a: Artifact<T> = read(path)?;
    if a.meta.manifest_hash != loaded.hash {
        bail!(
            "{} was produced under manifest {}, not the current {}; re-run prepare-data",
            path.display(),
            &a.meta.manifest_hash[..12.min(a.meta.manifest_hash.len())],
            &loaded.hash[..12]
        );
    }
    Ok(a)
}

/// Plain text output with a provenance header line.
pub fn write_text(path: &Path, meta: &ArtifactMeta, body: &str) -> Result<()> {
    create_parent(path)?;
    let text = format!(
        "# {} manifest={} seed={} version={}\n{body}",
        meta.kind, meta.manifest_hash, meta.seed, meta.code_version
    );
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Line-delimited records preceded by a `{"meta": ...}` line.
pub fn write_jsonl(path: &Path, meta: &ArtifactMeta, body: &str) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string(&serde_json::json!({ "meta": meta }))?;
    text.push('\n');
    text.push_str(body);
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
