//! Lexicons, baseline and synthetic orthographies, dataset assembly.

mod dataset;
mod generators;
mod lexicon;
mod sources;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecError;

pub use dataset::{build_dataset, read_jsonl, to_jsonl, DatasetBundle, SplitCounts};
pub use generators::{
    esperanto_like_lexicon, esperanto_like_raw, make_ent, make_eno, make_synthetic,
    SyntheticOrthography, ENO_GRAPHEMES, ESPERANTO_LEXICON_SIZE, SYNTHETIC_GRAPHEME_POOL,
    SYNTHETIC_PHONEMES,
};
pub use lexicon::{ingest_rows, load_lexicon, parse_lexicon, DropReason, IngestReport};
pub use sources::{materialize, sub_seed, CorpusConfig, OrthographyPlan, Source};

/// One word: its spelling and its pronunciation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub spelled: String,
    pub pron: String,
}

impl LexiconEntry {
    pub fn new(spelled: impl Into<String>, pron: impl Into<String>) -> Self {
        Self {
            spelled: spelled.into(),
            pron: pron.into(),
        }
    }
}

/// Stress, tone and syllable-boundary marks removed from pronunciations
/// unless an orthography overrides its strip set.
pub const DEFAULT_IPA_STRIP: &str = "ˈˌ'.‿˥˦˧˨˩\u{0300}\u{0301}\u{0302}\u{0304}\u{030C}\u{030B}\u{030F}";

/// Per-orthography ingestion rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrthographySpec {
    pub code: String,
    pub lowercase_required: bool,
    pub keep_capitals: bool,
    #[serde(with = "char_set::option")]
    pub alphabet: Option<BTreeSet<char>>,
    #[serde(with = "char_set")]
    pub ipa_strip_set: BTreeSet<char>,
    #[serde(with = "char_set")]
    pub ipa_keep_set: BTreeSet<char>,
}

impl Default for OrthographySpec {
    fn default() -> Self {
        Self::new("xx")
    }
}

impl OrthographySpec {
    /// Lowercase-only, any alphabet, default IPA cleanup keeping `ː`.
    pub fn new(code: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            lowercase_required: true,
            keep_capitals: false,
            alphabet: None,
            ipa_strip_set: DEFAULT_IPA_STRIP.chars().collect(),
            ipa_keep_set: BTreeSet::from(['ː']),
        }
    }

    /// Capitals are allowed (common nouns are lowercased upstream).
    pub fn german() -> Self {
        Self {
            lowercase_required: false,
            keep_capitals: true,
            ..Self::new("de")
        }
    }

    pub fn with_alphabet(mut self, alphabet: &str) -> Self {
        self.alphabet = Some(alphabet.chars().collect());
        self
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.keep_capitals && self.lowercase_required {
            return Err(CorpusError::Config(format!(
                "{}: keep_capitals requires lowercase_required = false",
                self.code
            )));
        }
        let n = self.code.chars().count();
        if !(2..=3).contains(&n) {
            return Err(CorpusError::Config(format!(
                "orthography code {:?} must have 2-3 characters",
                self.code
            )));
        }
        Ok(())
    }

    pub(crate) fn strips(&self, c: char) -> bool {
        self.ipa_strip_set.contains(&c) && !self.ipa_keep_set.contains(&c)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("invalid corpus config: {0}")]
    Config(String),
    #[error("orthography {code} has {available} entries, {needed} needed (short by {})", .needed - .available)]
    Insufficient {
        code: String,
        available: usize,
        needed: usize,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid dataset line {line}: {reason}")]
    Jsonl { line: usize, reason: String },
}

mod char_set {
    use std::collections::BTreeSet;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(set: &BTreeSet<char>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&set.iter().collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<char>, D::Error> {
        Ok(String::deserialize(d)?.chars().collect())
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(
            set: &Option<BTreeSet<char>>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            match set {
                Some(set) => s.serialize_some(&set.iter().collect::<String>()),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Option<BTreeSet<char>>, D::Error> {
            Ok(Option::<String>::deserialize(d)?.map(|s| s.chars().collect()))
        }
    }
}
