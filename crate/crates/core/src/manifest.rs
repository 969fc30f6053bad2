//! Run manifests: which config produced which files, with content hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub sha256: String,
    pub bytes: u64,
    /// Subcommand that wrote the file.
    pub command: String,
}

/// Wall-clock and thread metadata. Excluded from [`RunManifest::content_hash`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub threads: usize,
    pub wall_clock_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub config_hash: String,
    /// Resolved config, defaults included; `--config manifest.json` replays it.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub rng: String,
    /// Artifact paths relative to the output directory.
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    pub runtime: RuntimeInfo,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> RunManifest {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.content_hash(),
            config: config.clone(),
            seed: config.seed,
            rng: "ChaCha8 streams keyed by splitmix-derived (seed, trajectory) pairs".into(),
            artifacts: BTreeMap::new(),
            runtime: RuntimeInfo::default(),
        }
    }

    /// Loads `<out>/manifest.json` when it belongs to the same config, otherwise
    /// starts a fresh manifest.
    pub fn open(config: &ExperimentConfig) -> Result<RunManifest> {
        let path = config.out.join(MANIFEST_FILE);
        let fresh = RunManifest::new(config);
        if !path.exists() {
            return Ok(fresh);
        }
        let existing = RunManifest::load(&path)?;
        if existing.config_hash == fresh.config_hash && existing.code_version == fresh.code_version
        {
            Ok(RunManifest {
                config: config.clone(),
                ..existing
            })
        } else {
            Ok(fresh)
        }
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: format!("manifest {}", path.display()),
            message: e.to_string(),
        })?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Parse {
                what: format!("manifest {}", path.display()),
                message: format!("unsupported schema_version {}", m.schema_version),
            });
        }
        Ok(m)
    }

    /// Hashes `path` (inside `out`) and records it.
    pub fn record(&mut self, out: &Path, path: &Path, command: &str) -> Result<()> {
        let (sha256, bytes) = sha256_file(path)?;
        let key = path
            .strip_prefix(out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.artifacts.insert(
            key,
            ArtifactRecord {
                sha256,
                bytes,
                command: command.into(),
            },
        );
        Ok(())
    }

    /// Re-hashes every recorded artifact and lists the ones that changed or vanished.
    pub fn verify_artifacts(&self, out: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|(key, rec)| match sha256_file(&out.join(key)) {
                Ok((h, _)) => h != rec.sha256,
                Err(_) => true,
            })
            .map(|(key, _)| key.clone())
            .collect()
    }

    /// SHA-256 over everything except [`RuntimeInfo`] and the runtime-only config fields.
    pub fn content_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            schema_version: u32,
            code_version: &'a str,
            config_hash: &'a str,
            seed: u64,
            rng: &'a str,
            artifacts: &'a BTreeMap<String, ArtifactRecord>,
        }
        let h = Hashed {
            schema_version: self.schema_version,
            code_version: &self.code_version,
            config_hash: &self.config_hash,
            seed: self.seed,
            rng: &self.rng,
            artifacts: &self.artifacts,
        };
        hex::encode(Sha256::digest(
            serde_json::to_vec(&h).expect("manifest serializes"),
        ))
    }

    pub fn save(&self, out: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
