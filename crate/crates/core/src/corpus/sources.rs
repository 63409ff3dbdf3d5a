use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    esperanto_like_lexicon, load_lexicon, make_ent, make_eno, make_synthetic, CorpusError,
    IngestReport, LexiconEntry, OrthographySpec, ESPERANTO_LEXICON_SIZE,
};

const ESPERANTO_LIKE_SEED: u64 = 0x0e5e_2024;

/// Where the entries of one orthography come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// A `spelled<TAB>pron` file.
    Lexicon {
        path: PathBuf,
        #[serde(default)]
        spec: Option<OrthographySpec>,
    },
    /// The bundled Esperanto-like lexicon.
    EsperantoLike {
        #[serde(default = "default_size")]
        size: usize,
    },
    /// Pronunciation written as itself.
    Ent {
        #[serde(default = "default_size")]
        size: usize,
    },
    /// Pronunciation written with independent random letters.
    Eno {
        #[serde(default = "default_size")]
        size: usize,
    },
    /// Synthetic words with a `k`-way ambiguous final grapheme.
    Synthetic {
        k: usize,
        #[serde(default = "default_min_len")]
        min_len: usize,
        #[serde(default = "default_max_len")]
        max_len: usize,
        size: usize,
    },
}

fn default_size() -> usize {
    ESPERANTO_LEXICON_SIZE
}

fn default_min_len() -> usize {
    3
}

fn default_max_len() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrthographyPlan {
    pub code: String,
    pub source: Source,
}

impl OrthographyPlan {
    pub fn new(code: impl Into<String>, source: Source) -> Self {
        Self {
            code: code.into(),
            source,
        }
    }
}

/// The orthographies of an experiment and the per-orthography split sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub orthographies: Vec<OrthographyPlan>,
    pub n_train: usize,
    pub n_test: usize,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.orthographies.is_empty() {
            return Err(CorpusError::Config("no orthographies listed".into()));
        }
        if self.n_test == 0 {
            return Err(CorpusError::Config("n_test must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for plan in &self.orthographies {
            let n = plan.code.chars().count();
            if !(2..=3).contains(&n) || plan.code.chars().any(|c| !c.is_alphanumeric()) {
                return Err(CorpusError::Config(format!(
                    "orthography code {:?} must be 2-3 alphanumeric characters",
                    plan.code
                )));
            }
            if !seen.insert(&plan.code) {
                return Err(CorpusError::Config(format!("duplicate orthography {}", plan.code)));
            }
        }
        Ok(())
    }

    /// Resolves relative lexicon paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        for plan in &mut self.orthographies {
            if let Source::Lexicon { path, .. } = &mut plan.source {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }
}

/// Stable 64-bit seed derived from a master seed and a name, independent of
/// iteration order.
pub fn sub_seed(seed: u64, code: &str, purpose: &str) -> u64 {
    // FNV-1a over the bytes, then a splitmix finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in code.bytes().chain([0xff]).chain(purpose.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Produces the full entry list of every orthography. Generated sources
/// that depend on randomness draw from `sub_seed(seed, code, ..)`.
pub fn materialize(
    config: &CorpusConfig,
    seed: u64,
) -> Result<(BTreeMap<String, Vec<LexiconEntry>>, Vec<IngestReport>), CorpusError> {
    config.validate()?;
    let mut out = BTreeMap::new();
    let mut reports = Vec::new();
    let mut base_cache: Option<Vec<LexiconEntry>> = None;
    let mut base = |size: usize| -> Vec<LexiconEntry> {
        let cached = base_cache.get_or_insert_with(|| {
            esperanto_like_lexicon(ESPERANTO_LEXICON_SIZE, ESPERANTO_LIKE_SEED)
        });
        if size <= cached.len() {
            cached[..size].to_vec()
        } else {
            esperanto_like_lexicon(size, ESPERANTO_LIKE_SEED)
        }
    };
    for plan in &config.orthographies {
        let code = plan.code.as_str();
        let entries = match &plan.source {
            Source::Lexicon { path, spec } => {
                let spec = match spec {
                    Some(s) => OrthographySpec {
                        code: code.to_string(),
                        ..s.clone()
                    },
                    None if code == "de" => OrthographySpec::german(),
                    None => OrthographySpec::new(code),
                };
                let (entries, report) = load_lexicon(path, &spec)?;
                reports.push(report);
                entries
            }
            Source::EsperantoLike { size } => base(*size),
            Source::Ent { size } => make_ent(&base(*size)),
            Source::Eno { size } => make_eno(&base(*size), sub_seed(seed, code, "eno")),
            Source::Synthetic {
                k,
                min_len,
                max_len,
                size,
            } => make_synthetic(*size, *k, *min_len..=*max_len, sub_seed(seed, code, "synthetic"))?.0,
        };
        out.insert(plan.code.clone(), entries);
    }
    Ok((out, reports))
}
