//! Phonemic transparency measurement with a character-level transformer.
//!
//! A single decoder-only model learns word-level *write* (phonemes to
//! graphemes) and *read* (graphemes to phonemes) tasks for many
//! orthographies at once. Exact-match accuracy per orthography and task is
//! the transparency score.
//!
//! The crate is layered bottom-up:
//!
//! - [`autodiff`]: tape-based reverse-mode differentiation and Adam
//! - [`model`]: the GPT-style decoder and its checkpoint format
//! - [`codec`]: vocabulary and sample/token-block conversion
//! - [`corpus`]: lexicon ingestion, baseline and synthetic orthographies,
//!   dataset assembly
//! - [`trainer`]: the mini-batch training loop
//! - [`evaluator`]: greedy decoding, scoring and episode aggregation
//! - [`verify`]: finite-difference and invariant self-checks

pub mod autodiff;
pub mod codec;
pub mod corpus;
pub mod evaluator;
pub mod model;
pub mod trainer;
pub mod verify;

pub use autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};
pub use codec::{Sample, Task, Vocab};
pub use corpus::{DatasetBundle, LexiconEntry, OrthographySpec};
pub use evaluator::{AggregateReport, EpisodeReport, PairScore};
pub use model::{Model, ModelConfig};
pub use trainer::{LossTrace, TrainConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
