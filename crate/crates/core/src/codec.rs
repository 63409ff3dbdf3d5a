//! Character inventory and sample ⇄ token-block conversion.
//!
//! A sample serializes as `orthography,task,input,output⟨EOT⟩`. Everything
//! through the third comma is the prompt; the model is trained only on the
//! output characters and the terminator.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Padding control token (never produced by a lexicon).
pub const PAD: char = '\u{0}';
/// End-of-text control token terminating every serialized sample.
pub const EOT: char = '\u{3}';
pub const SEPARATOR: char = ',';
pub const PAD_ID: usize = 0;
pub const EOT_ID: usize = 1;
/// Longest admissible input or output field, in characters.
pub const MAX_FIELD_CHARS: usize = 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid sample {sample}: {reason}")]
    InvalidSample { sample: String, reason: String },
    #[error("character {ch:?} (U+{code:04X}) is not in the vocabulary", code = *.ch as u32)]
    UnknownChar { ch: char },
    #[error("token id {id} is not in the vocabulary")]
    UnknownId { id: usize },
    #[error("serialized sample needs {len} tokens but the block holds {block_size}")]
    TooLong { len: usize, block_size: usize },
    #[error("cannot build a vocabulary from an empty sample set")]
    Empty,
    #[error("malformed vocabulary listing: {0}")]
    BadListing(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// phonemes → graphemes
    Write,
    /// graphemes → phonemes
    Read,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Write, Task::Read];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Write => "write",
            Task::Read => "read",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "write" => Ok(Task::Write),
            "read" => Ok(Task::Read),
            other => Err(CodecError::UnknownTask(other.to_string())),
        }
    }
}

/// True for characters no sample field may contain.
pub fn is_reserved(c: char) -> bool {
    c == SEPARATOR || c.is_whitespace() || c.is_control()
}

/// One training or evaluation unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub orthography: String,
    pub task: Task,
    pub input: String,
    pub output: String,
}

impl Sample {
    pub fn new(
        orthography: impl Into<String>,
        task: Task,
        input: impl Into<String>,
        output: impl Into<String>,
    ) -> Result<Self, CodecError> {
        let s = Self {
            orthography: orthography.into(),
            task,
            input: input.into(),
            output: output.into(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let fail = |reason: String| {
            Err(CodecError::InvalidSample {
                sample: format!("{}/{}/{:?}/{:?}", self.orthography, self.task, self.input, self.output),
                reason,
            })
        };
        let code_len = self.orthography.chars().count();
        if !(2..=3).contains(&code_len) {
            return fail(format!("orthography code must have 2-3 characters, has {code_len}"));
        }
        for (name, field, max) in [
            ("orthography", &self.orthography, 3),
            ("input", &self.input, MAX_FIELD_CHARS),
            ("output", &self.output, MAX_FIELD_CHARS),
        ] {
            let n = field.chars().count();
            if n == 0 {
                return fail(format!("{name} is empty"));
            }
            if n > max {
                return fail(format!("{name} has {n} characters, limit {max}"));
            }
            if let Some(c) = field.chars().find(|&c| is_reserved(c)) {
                return fail(format!("{name} contains reserved character {c:?}"));
            }
        }
        Ok(())
    }

    /// Prompt text: `orthography,task,input,`
    pub fn prompt(&self) -> String {
        prompt_text(&self.orthography, self.task, &self.input)
    }

    /// `orthography,task,input,output⟨EOT⟩`
    pub fn serialize(&self) -> String {
        let mut s = self.prompt();
        s.push_str(&self.output);
        s.push(EOT);
        s
    }

    /// Inverse of [`Sample::serialize`]; the trailing EOT is optional.
    pub fn parse(text: &str) -> Result<Self, CodecError> {
        let body = text.strip_suffix(EOT).unwrap_or(text);
        let fields: Vec<&str> = body.split(SEPARATOR).collect();
        let [orthography, task, input, output] = fields.as_slice() else {
            return Err(CodecError::InvalidSample {
                sample: body.to_string(),
                reason: format!("expected 4 comma-separated fields, found {}", fields.len()),
            });
        };
        Sample::new(*orthography, task.parse()?, *input, *output)
    }
}

pub fn prompt_text(orthography: &str, task: Task, input: &str) -> String {
    format!("{orthography}{SEPARATOR}{task}{SEPARATOR}{input}{SEPARATOR}")
}

/// Bijective character ⇄ id mapping. Ids 0 and 1 are PAD and EOT; the
/// remaining characters follow in code-point order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<char>,
    ids: HashMap<char, usize>,
}

impl Vocab {
    /// Every distinct character of the serialized samples plus the controls.
    pub fn build<'a, I>(samples: I) -> Result<Self, CodecError>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        let mut chars = BTreeSet::from([SEPARATOR]);
        let mut any = false;
        for s in samples {
            s.validate()?;
            any = true;
            chars.extend(s.prompt().chars());
            chars.extend(s.output.chars());
        }
        if !any {
            return Err(CodecError::Empty);
        }
        let mut symbols = vec![PAD, EOT];
        symbols.extend(chars);
        Ok(Self::from_sorted(symbols))
    }

    /// Rebuilds a vocabulary from its id-ordered listing.
    pub fn from_symbols(symbols: Vec<char>) -> Result<Self, CodecError> {
        if symbols.len() < 3 || symbols[PAD_ID] != PAD || symbols[EOT_ID] != EOT {
            return Err(CodecError::BadListing(
                "listing must start with PAD and EOT".into(),
            ));
        }
        if !symbols[2..].windows(2).all(|w| w[0] < w[1]) {
            return Err(CodecError::BadListing(
                "characters must be strictly increasing".into(),
            ));
        }
        if symbols[2..].iter().any(|&c| c.is_control()) {
            return Err(CodecError::BadListing("control character in listing".into()));
        }
        if !symbols.contains(&SEPARATOR) {
            return Err(CodecError::BadListing("separator missing".into()));
        }
        Ok(Self::from_sorted(symbols))
    }

    fn from_sorted(symbols: Vec<char>) -> Self {
        let ids = symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self { symbols, ids }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn id(&self, c: char) -> Result<usize, CodecError> {
        self.ids.get(&c).copied().ok_or(CodecError::UnknownChar { ch: c })
    }

    pub fn symbol(&self, id: usize) -> Result<char, CodecError> {
        self.symbols.get(id).copied().ok_or(CodecError::UnknownId { id })
    }

    pub fn contains(&self, c: char) -> bool {
        self.ids.contains_key(&c)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>, CodecError> {
        text.chars().map(|c| self.id(c)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String, CodecError> {
        ids.iter().map(|&id| self.symbol(id)).collect()
    }
}

/// One sample laid out as a next-character prediction block.
///
/// `x` is the serialization padded with PAD; `y[i]` is the token following
/// `x[i]`, or `None` where no loss applies (prompt and padding).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBlock {
    pub x: Vec<usize>,
    pub y: Vec<Option<usize>>,
    /// Serialized length including EOT.
    pub len: usize,
}

impl TrainingBlock {
    /// Number of leading positions that matter; the rest is padding.
    pub fn used(&self) -> usize {
        self.len - 1
    }

    pub fn active_targets(&self) -> usize {
        self.y.iter().flatten().count()
    }
}

pub fn to_training_block(
    sample: &Sample,
    vocab: &Vocab,
    block_size: usize,
) -> Result<TrainingBlock, CodecError> {
    sample.validate()?;
    let tokens = vocab.encode(&sample.serialize())?;
    let len = tokens.len();
    if len > block_size {
        return Err(CodecError::TooLong { len, block_size });
    }
    let prompt_len = sample.prompt().chars().count();
    let mut x = vec![PAD_ID; block_size];
    x[..len].copy_from_slice(&tokens);
    let y = (0..block_size)
        .map(|i| {
            let next = i + 1;
            (next >= prompt_len && next < len).then(|| tokens[next])
        })
        .collect();
    Ok(TrainingBlock { x, y, len })
}

/// Token ids of `orthography,task,input,`.
pub fn make_prompt(
    orthography: &str,
    task: Task,
    input: &str,
    vocab: &Vocab,
) -> Result<Vec<usize>, CodecError> {
    vocab.encode(&prompt_text(orthography, task, input))
}
