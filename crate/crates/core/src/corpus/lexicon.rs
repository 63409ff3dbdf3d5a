//! Lexicon TSV ingestion: `spelled<TAB>pron` per line, `#` comments.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use super::{CorpusError, LexiconEntry, OrthographySpec};
use crate::codec::{is_reserved, MAX_FIELD_CHARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    Space,
    Empty,
    TooLong,
    Capitals,
    NonAlphabet,
    Reserved,
    Duplicate,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Space => "space",
            DropReason::Empty => "empty",
            DropReason::TooLong => "too_long",
            DropReason::Capitals => "capitals",
            DropReason::NonAlphabet => "non_alphabet",
            DropReason::Reserved => "reserved_char",
            DropReason::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for DropReason {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Kept/dropped counts for one ingested lexicon.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub code: String,
    pub rows: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl IngestReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn count(&self, reason: DropReason) -> usize {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }
}

fn check(spelled: &str, pron: &str, spec: &OrthographySpec) -> Result<(), DropReason> {
    let both = || spelled.chars().chain(pron.chars());
    if both().any(char::is_whitespace) {
        return Err(DropReason::Space);
    }
    if spelled.is_empty() || pron.is_empty() {
        return Err(DropReason::Empty);
    }
    if spelled.chars().count() > MAX_FIELD_CHARS || pron.chars().count() > MAX_FIELD_CHARS {
        return Err(DropReason::TooLong);
    }
    if spec.lowercase_required && spelled.chars().any(char::is_uppercase) {
        return Err(DropReason::Capitals);
    }
    if let Some(alphabet) = &spec.alphabet {
        if spelled.chars().any(|c| !alphabet.contains(&c)) {
            return Err(DropReason::NonAlphabet);
        }
    }
    if both().any(is_reserved) {
        return Err(DropReason::Reserved);
    }
    Ok(())
}

/// Applies normalization and the filter rules to `(spelled, pron)` rows.
pub fn ingest_rows<I, S>(rows: I, spec: &OrthographySpec) -> Result<(Vec<LexiconEntry>, IngestReport), CorpusError>
where
    I: IntoIterator<Item = (S, S)>,
    S: AsRef<str>,
{
    spec.validate()?;
    let mut report = IngestReport {
        code: spec.code.clone(),
        ..IngestReport::default()
    };
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (spelled, pron) in rows {
        report.rows += 1;
        let spelled: String = spelled.as_ref().nfc().collect();
        let pron: String = pron.as_ref().nfc().filter(|&c| !spec.strips(c)).collect();
        let verdict = check(&spelled, &pron, spec).and_then(|()| {
            let entry = LexiconEntry { spelled, pron };
            if seen.insert(entry.clone()) {
                Ok(entry)
            } else {
                Err(DropReason::Duplicate)
            }
        });
        match verdict {
            Ok(entry) => entries.push(entry),
            Err(reason) => *report.dropped.entry(reason).or_default() += 1,
        }
    }
    report.kept = entries.len();
    Ok((entries, report))
}

/// Parses TSV text into rows, skipping blank and `#` lines.
pub fn parse_lexicon(text: &str) -> Result<Vec<(String, String)>, CorpusError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(p), None) => rows.push((s.to_string(), p.to_string())),
            _ => {
                return Err(CorpusError::Malformed {
                    line: i + 1,
                    reason: format!("expected `spelled<TAB>pron`, got {line:?}"),
                })
            }
        }
    }
    Ok(rows)
}

pub fn load_lexicon(
    path: &Path,
    spec: &OrthographySpec,
) -> Result<(Vec<LexiconEntry>, IngestReport), CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_rows(parse_lexicon(&text)?, spec)
}
