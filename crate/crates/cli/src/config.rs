//! Experiment configuration: preset defaults, a JSON file merged on top,
//! then command-line flags.

use std::path::{Path, PathBuf};

use orthodepth_core::corpus::{CorpusConfig, OrthographyPlan, Source, ESPERANTO_LEXICON_SIZE};
use orthodepth_core::trainer::TrainConfig;
use orthodepth_core::ModelConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Orthographies of the full-scale study, each read from
/// `lexicons/<code>.tsv`.
pub const PAPER_ORTHOGRAPHIES: [&str; 17] = [
    "ar", "br", "de", "en", "eo", "es", "fi", "fr", "fro", "it", "ko", "nl", "pt", "ru", "sh",
    "tr", "zh",
];

pub const DEFAULT_CURVE_SIZES: [usize; 5] = [1_000, 2_000, 3_000, 5_000, 10_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub episodes: usize,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub learning_curve_sizes: Vec<usize>,
}

fn baseline_corpus() -> CorpusConfig {
    CorpusConfig {
        orthographies: vec![
            OrthographyPlan::new("ent", Source::Ent { size: ESPERANTO_LEXICON_SIZE }),
            OrthographyPlan::new("eno", Source::Eno { size: ESPERANTO_LEXICON_SIZE }),
        ],
        n_train: 10_000,
        n_test: 1_000,
    }
}

fn paper_corpus() -> CorpusConfig {
    CorpusConfig {
        orthographies: PAPER_ORTHOGRAPHIES
            .iter()
            .map(|&code| {
                OrthographyPlan::new(
                    code,
                    Source::Lexicon {
                        path: PathBuf::from(format!("lexicons/{code}.tsv")),
                        spec: None,
                    },
                )
            })
            .collect(),
        n_train: 10_000,
        n_test: 1_000,
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self {
                preset,
                seed: 0,
                episodes: 11,
                corpus: paper_corpus(),
                model: ModelConfig::paper(0),
                train: TrainConfig::paper(),
                learning_curve_sizes: DEFAULT_CURVE_SIZES.to_vec(),
            },
            Preset::Desk | Preset::Custom => Self {
                preset,
                seed: 0,
                episodes: 1,
                corpus: baseline_corpus(),
                model: ModelConfig::desk(0),
                train: TrainConfig::desk(),
                learning_curve_sizes: DEFAULT_CURVE_SIZES.to_vec(),
            },
        }
    }

    /// Preset defaults (flag, else the file's `preset`, else desk), the
    /// file merged over them, then the seed flag. Relative lexicon paths
    /// are taken relative to the config file.
    pub fn resolve(
        file: Option<&Path>,
        preset: Option<Preset>,
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        let (overrides, base_dir) = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                if !value.is_object() {
                    return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
                }
                (value, path.parent().map(Path::to_path_buf))
            }
            None => (Value::Object(Default::default()), None),
        };
        let file_preset = match overrides.get("preset") {
            Some(v) => Some(
                serde_json::from_value::<Preset>(v.clone())
                    .map_err(|e| CliError::Config(format!("preset: {e}")))?,
            ),
            None => None,
        };
        let preset = preset.or(file_preset).unwrap_or(Preset::Desk);
        let mut merged = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        merge(&mut merged, overrides);
        merged["preset"] = serde_json::to_value(preset).expect("preset serializes");
        let mut config: Self =
            serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(dir) = base_dir {
            config.corpus.rebase(&dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.episodes == 0 {
            return Err(CliError::Config("episodes must be positive".into()));
        }
        self.corpus
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut model = self.model.clone();
        model.vocab_size = model.vocab_size.max(1);
        model
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// `seed + i` for each episode.
    pub fn episode_seeds(&self) -> Vec<u64> {
        (0..self.episodes as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Recursive object merge; any non-object value in `patch` replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base), Value::Object(patch)) => {
            for (k, v) in patch {
                match base.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        base.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
