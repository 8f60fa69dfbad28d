//! On-disk artifact layout with config-hash verification. Every artifact
//! embeds the hash of the configuration slice that produced it; a stage is
//! skipped when its artifact exists with a matching hash.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::config::canonical_json;

pub const ARTIFACT_VERSION: u32 = 1;

/// SHA-256 of the canonical JSON of a config slice.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = canonical_json(value)?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Versioned envelope shared by all JSON artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub payload: T,
}

impl<T: Serialize + DeserializeOwned> Artifact<T> {
    pub fn new(config_hash: &str, seed: u64, payload: T) -> Self {
        Self { version: ARTIFACT_VERSION, config_hash: config_hash.to_string(), seed, payload }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, canonical_json(self)?)?;
        Ok(())
    }

    /// Loads and verifies version and config hash.
    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
        let artifact: Artifact<T> = serde_json::from_str(&text)
            .map_err(|e| Error::Artifact(format!("corrupt artifact {}: {e}", path.display())))?;
        if artifact.version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "artifact {} has version {}, expected {ARTIFACT_VERSION}",
                path.display(),
                artifact.version
            )));
        }
        if artifact.config_hash != expected_hash {
            return Err(Error::Artifact(format!(
                "artifact {} was produced by a different config (hash {} != {})",
                path.display(),
                artifact.config_hash,
                expected_hash
            )));
        }
        Ok(artifact)
    }
}

/// True when the artifact exists and carries the expected hash.
pub fn is_fresh<T: Serialize + DeserializeOwned>(path: &Path, expected_hash: &str) -> bool {
    path.exists() && Artifact::<T>::load(path, expected_hash).is_ok()
}

/// Rooted directory layout for one experiment output tree.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    pub root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["corpus", "checkpoints", "codebooks", "sids", "indexes", "reports", "logs"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root })
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn corpus_items(&self) -> PathBuf {
        self.root.join("corpus/items.jsonl")
    }

    pub fn corpus_queries(&self) -> PathBuf {
        self.root.join("corpus/queries.jsonl")
    }

    pub fn checkpoint(&self, label: &str, seed: u64) -> PathBuf {
        self.root.join(format!("checkpoints/{label}_seed{seed}.json"))
    }

    pub fn train_log(&self, label: &str, seed: u64) -> PathBuf {
        self.root.join(format!("logs/trainlog_{label}_seed{seed}.csv"))
    }

    pub fn correlation(&self, label: &str, seed: u64) -> PathBuf {
        self.root.join(format!("logs/correlation_{label}_seed{seed}.json"))
    }

    pub fn codebook(&self, modality: &str, seed: u64) -> PathBuf {
        self.root.join(format!("codebooks/{modality}_seed{seed}.json"))
    }

    pub fn sid_table(&self, seed: u64) -> PathBuf {
        self.root.join(format!("sids/sids_seed{seed}.json"))
    }

    pub fn vocab_table(&self) -> PathBuf {
        self.root.join("sids/vocabulary.json")
    }

    pub fn index(&self, label: &str, seed: u64) -> PathBuf {
        self.root.join(format!("indexes/{label}_seed{seed}.json"))
    }

    pub fn report(&self, variant: &str) -> PathBuf {
        self.root.join(format!("reports/report_{}.json", sanitize(variant)))
    }

    pub fn report_csv(&self, variant: &str) -> PathBuf {
        self.root.join(format!("reports/report_{}.csv", sanitize(variant)))
    }

    pub fn combined_csv(&self) -> PathBuf {
        self.root.join("reports/combined.csv")
    }

    pub fn combined_json(&self) -> PathBuf {
        self.root.join("reports/combined.json")
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '-' }).collect()
}
