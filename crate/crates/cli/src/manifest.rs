//! Run manifests: the config echo, key scalar results and a sha256
//! checksum of every file the run produced. Re-running a manifest's config
//! in a deterministic mode reproduces the checksums bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub code_version: String,
    pub wall_time_seconds: f64,
    pub config: RunConfig,
    /// Key scalar results, ordered by name.
    pub results: BTreeMap<String, f64>,
    /// sha256 of each produced file, keyed by file name.
    pub checksums: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: RunConfig) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: 0.0,
            config,
            results: BTreeMap::new(),
            checksums: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, key: &str, value: f64) {
        self.results.insert(key.to_string(), value);
    }

    /// Checksum a produced file and remember it under its file name.
    pub fn checksum_file(&mut self, path: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(path)?;
        let mut h = Sha256::new();
        h.update(&bytes);
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.checksums.insert(name, hex::encode(h.finalize()));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.toml");
        let text = toml::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksums_are_stable() {
        let dir = std::env::temp_dir().join("fbflow_manifest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let f = dir.join("data.bin");
        std::fs::write(&f, b"payload").unwrap();
        let mut m1 = RunManifest::new("ns", RunConfig::default());
        m1.checksum_file(&f).unwrap();
        let mut m2 = RunManifest::new("ns", RunConfig::default());
        m2.checksum_file(&f).unwrap();
        assert_eq!(m1.checksums, m2.checksums);
        let path = m1.write(&dir).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.contains("data.bin"));
    }
}
