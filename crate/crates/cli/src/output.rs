use std::path::{Path, PathBuf};

use orthodepth_core::model::CHECKPOINT_VERSION;
use serde::Serialize;

use crate::{CliError, ExperimentConfig};

/// `bundles/`, `checkpoints/` and `reports/` under one root, plus
/// `manifest.json`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn bundles(&self) -> PathBuf {
        self.root.join("bundles")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn write(&self, path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let wrap = |source| CliError::Write {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(wrap)?;
        }
        std::fs::write(path, contents).map_err(wrap)
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
        self.write(&self.manifest(), text)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub orthodepth_core: &'static str,
    pub orthodepth_cli: &'static str,
    pub checkpoint_format: u8,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            orthodepth_core: orthodepth_core::VERSION,
            orthodepth_cli: env!("CARGO_PKG_VERSION"),
            checkpoint_format: CHECKPOINT_VERSION,
        }
    }
}

/// Provenance of one command's outputs. Contains no timestamps, so equal
/// inputs give equal bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub episode_seeds: Vec<u64>,
    pub versions: Versions,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: config.hash(),
            master_seed: config.seed,
            episode_seeds: config.episode_seeds(),
            versions: Versions::default(),
            notes: Vec::new(),
            config: config.clone(),
        }
    }
}
