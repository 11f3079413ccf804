//! Run manifest: everything needed to repeat a training run exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use graphclust::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Files that make up a bundle directory, in hashing order.
const BUNDLE_FILES: [&str; 5] = ["meta.json", "edges.tsv", "features.tsv", "features.f32le", "labels.tsv"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleChecksum {
    /// SHA-256 over the per-file digests.
    pub sha256: String,
    pub files: BTreeMap<String, String>,
}

impl BundleChecksum {
    pub fn compute(dir: &Path) -> Result<Self, Failure> {
        let mut files = BTreeMap::new();
        let mut combined = Sha256::new();
        for name in BUNDLE_FILES {
            let path = dir.join(name);
            if !path.is_file() {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Failure::bundle(format!("{}: {e}", path.display())))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            combined.update(format!("{name}\t{digest}\n"));
            files.insert(name.to_string(), digest);
        }
        Ok(Self {
            sha256: hex::encode(combined.finalize()),
            files,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    /// Resolved configuration with every key present.
    pub config: TrainConfig,
    pub bundle: BundleChecksum,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("invalid manifest {}: {e}", path.display())))?;
        manifest.config.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_tracks_file_contents() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("meta.json"), "{}").unwrap();
        fs::write(dir.path().join("edges.tsv"), "0\t1\n").unwrap();
        let a = BundleChecksum::compute(dir.path()).unwrap();
        assert_eq!(a.files.len(), 2);
        assert_eq!(a, BundleChecksum::compute(dir.path()).unwrap());
        fs::write(dir.path().join("edges.tsv"), "0\t2\n").unwrap();
        assert_ne!(a.sha256, BundleChecksum::compute(dir.path()).unwrap().sha256);
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = TrainConfig::default();
        config.train.seed = 9;
        config.curriculum.pace = 0.75;
        let m = RunManifest {
            version: "0.1.0".into(),
            seed: 9,
            config,
            bundle: BundleChecksum {
                sha256: "00".into(),
                files: BTreeMap::new(),
            },
            started_unix_ms: 1,
            finished_unix_ms: 2,
        };
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
    }
}
