//! Greedy decoding, exact-match scoring and the episode protocol.

mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape};
use crate::codec::{make_prompt, CodecError, Sample, Task, Vocab, EOT_ID, PAD_ID};
use crate::corpus::{build_dataset, materialize, sub_seed, CorpusConfig, CorpusError, DatasetBundle};
use crate::model::{Mode, Model, ModelConfig, ModelError};
use crate::trainer::{train, LossTrace, Precision, TrainConfig, TrainError};

pub use report::{aggregate, format_mean_std, AggregateReport, AggregateRow};

/// Longest generated output: a full 25-character field plus the terminator.
pub const MAX_LEN: usize = 26;

const DECODE_BATCH: usize = 128;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to score")]
    Empty,
    #[error("samples mix pairs: {0}")]
    MixedPair(String),
    #[error("episode reports cover different pairs: {0}")]
    PairMismatch(String),
    #[error("aggregation needs at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("transducer returned {got} predictions for {expected} samples")]
    Count { expected: usize, got: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Anything that maps test samples to predicted outputs.
pub trait Transducer {
    fn transduce(&self, samples: &[Sample]) -> Result<Vec<String>, EvalError>;
}

/// Batched greedy decoding with a trained model.
pub struct GreedyDecoder<'a, T> {
    pub model: &'a Model<T>,
    pub vocab: &'a Vocab,
    pub max_len: usize,
}

impl<'a, T: Scalar> GreedyDecoder<'a, T> {
    pub fn new(model: &'a Model<T>, vocab: &'a Vocab) -> Self {
        Self {
            model,
            vocab,
            max_len: MAX_LEN,
        }
    }

    pub fn predict(&self, orthography: &str, task: Task, input: &str) -> Result<String, EvalError> {
        let prompt = make_prompt(orthography, task, input, self.vocab)?;
        let out = self.decode(&[prompt])?;
        Ok(self.vocab.decode(&out[0])?)
    }

    /// Generated ids (without terminator) for each prompt.
    pub fn decode(&self, prompts: &[Vec<usize>]) -> Result<Vec<Vec<usize>>, EvalError> {
        let mut out = Vec::with_capacity(prompts.len());
        for chunk in prompts.chunks(DECODE_BATCH) {
            out.extend(self.decode_chunk(chunk)?);
        }
        Ok(out)
    }

    fn decode_chunk(&self, prompts: &[Vec<usize>]) -> Result<Vec<Vec<usize>>, EvalError> {
        let block = self.model.config().block_size;
        let vocab_size = self.model.config().vocab_size;
        for p in prompts {
            if p.is_empty() || p.len() > block {
                return Err(ModelError::Length {
                    len: p.len(),
                    block_size: block,
                }
                .into());
            }
        }
        let mut seqs: Vec<Vec<usize>> = prompts.to_vec();
        let mut generated: Vec<Vec<usize>> = vec![Vec::new(); prompts.len()];
        let mut done = vec![false; prompts.len()];
        for _ in 0..self.max_len {
            let active: Vec<usize> = (0..seqs.len())
                .filter(|&i| !done[i] && seqs[i].len() <= block)
                .collect();
            if active.is_empty() {
                break;
            }
            let seq = active.iter().map(|&i| seqs[i].len()).max().unwrap_or(1);
            let mut tokens = Vec::with_capacity(active.len() * seq);
            let mut rows = Vec::with_capacity(active.len());
            for (j, &i) in active.iter().enumerate() {
                tokens.extend_from_slice(&seqs[i]);
                tokens.resize((j + 1) * seq, PAD_ID);
                rows.push(j * seq + seqs[i].len() - 1);
            }
            let mut tape = Tape::new();
            let fwd = self.model.forward_on_tape(
                &mut tape,
                &tokens,
                active.len(),
                seq,
                Mode::Eval,
                false,
                Some(&rows),
            )?;
            let logits = tape.data(fwd.logits);
            for (j, &i) in active.iter().enumerate() {
                let next = argmax_skipping_pad(&logits[j * vocab_size..(j + 1) * vocab_size]);
                if next == EOT_ID {
                    done[i] = true;
                    continue;
                }
                generated[i].push(next);
                seqs[i].push(next);
                if seqs[i].len() > block {
                    done[i] = true;
                }
            }
        }
        Ok(generated)
    }
}

/// Index of the largest logit, lowest id on ties; PAD is never chosen.
fn argmax_skipping_pad<T: Scalar>(row: &[T]) -> usize {
    let mut best = usize::MAX;
    for (id, &v) in row.iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        if best == usize::MAX || v > row[best] {
            best = id;
        }
    }
    best
}

impl<T: Scalar> Transducer for GreedyDecoder<'_, T> {
    fn transduce(&self, samples: &[Sample]) -> Result<Vec<String>, EvalError> {
        let prompts = samples
            .iter()
            .map(|s| make_prompt(&s.orthography, s.task, &s.input, self.vocab))
            .collect::<Result<Vec<_>, _>>()?;
        self.decode(&prompts)?
            .iter()
            .map(|ids| Ok(self.vocab.decode(ids)?))
            .collect()
    }
}

/// Greedy prediction for a single word.
pub fn predict<T: Scalar>(
    model: &Model<T>,
    vocab: &Vocab,
    orthography: &str,
    task: Task,
    input: &str,
    max_len: usize,
) -> Result<String, EvalError> {
    GreedyDecoder {
        model,
        vocab,
        max_len,
    }
    .predict(orthography, task, input)
}

/// Always answers with the target.
pub struct OracleStub;

impl Transducer for OracleStub {
    fn transduce(&self, samples: &[Sample]) -> Result<Vec<String>, EvalError> {
        Ok(samples.iter().map(|s| s.output.clone()).collect())
    }
}

/// Answers with the input unchanged.
pub struct CopyInput;

impl Transducer for CopyInput {
    fn transduce(&self, samples: &[Sample]) -> Result<Vec<String>, EvalError> {
        Ok(samples.iter().map(|s| s.input.clone()).collect())
    }
}

/// Answers with the same string for every sample.
pub struct Constant(pub String);

impl Transducer for Constant {
    fn transduce(&self, samples: &[Sample]) -> Result<Vec<String>, EvalError> {
        Ok(vec![self.0.clone(); samples.len()])
    }
}

pub fn exact_match(predicted: &str, target: &str) -> bool {
    predicted == target
}

/// Exact-match accuracy of one (orthography, task) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub orthography: String,
    pub task: Task,
    pub correct: usize,
    pub total: usize,
    pub percent: f64,
}

pub fn score_pair(transducer: &dyn Transducer, samples: &[Sample]) -> Result<PairScore, EvalError> {
    let first = samples.first().ok_or(EvalError::Empty)?;
    if let Some(other) = samples
        .iter()
        .find(|s| s.orthography != first.orthography || s.task != first.task)
    {
        return Err(EvalError::MixedPair(format!(
            "{}/{} and {}/{}",
            first.orthography, first.task, other.orthography, other.task
        )));
    }
    let predicted = transducer.transduce(samples)?;
    if predicted.len() != samples.len() {
        return Err(EvalError::Count {
            expected: samples.len(),
            got: predicted.len(),
        });
    }
    let correct = predicted
        .iter()
        .zip(samples)
        .filter(|(p, s)| exact_match(p, &s.output))
        .count();
    Ok(PairScore {
        orthography: first.orthography.clone(),
        task: first.task,
        correct,
        total: samples.len(),
        percent: 100.0 * correct as f64 / samples.len() as f64,
    })
}

/// Scores of every pair in one episode, sorted by orthography then task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub scores: Vec<PairScore>,
    /// Mean training loss over the last steps, when a model was trained.
    pub final_loss: Option<f64>,
}

impl EpisodeReport {
    pub fn score(&self, orthography: &str, task: Task) -> Option<&PairScore> {
        self.scores
            .iter()
            .find(|s| s.orthography == orthography && s.task == task)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> String {
        AggregateReport::from_single(self).to_csv()
    }
}

pub fn score_bundle(
    transducer: &dyn Transducer,
    bundle: &DatasetBundle,
    seed: u64,
) -> Result<EpisodeReport, EvalError> {
    let scores = bundle
        .test_pairs()
        .values()
        .map(|samples| score_pair(transducer, samples))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EpisodeReport {
        seed,
        scores,
        final_loss: None,
    })
}

/// Everything one episode produced.
#[derive(Debug, Clone)]
pub struct Episode {
    pub report: EpisodeReport,
    pub bundle: DatasetBundle,
    pub vocab: Vocab,
    /// Trained weights, stored at 32-bit precision.
    pub model: Model<f32>,
    pub trace: LossTrace,
}

/// Builds the datasets for `seed` and the vocabulary covering them.
pub fn episode_data(corpus: &CorpusConfig, seed: u64) -> Result<(DatasetBundle, Vocab), EvalError> {
    let (lexicons, _) = materialize(corpus, seed)?;
    let bundle = build_dataset(&lexicons, corpus.n_train, corpus.n_test, seed)?;
    let vocab = Vocab::build(bundle.train.iter().chain(&bundle.test))?;
    Ok((bundle, vocab))
}

/// Model and trainer configs used for an episode: the vocabulary size is
/// filled in and both seeds are derived from the episode seed.
pub fn episode_configs(
    model: &ModelConfig,
    train: &TrainConfig,
    vocab: &Vocab,
    seed: u64,
) -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        vocab_size: vocab.len(),
        seed: sub_seed(seed, "", "model"),
        ..model.clone()
    };
    let train = TrainConfig {
        seed: sub_seed(seed, "", "train"),
        ..train.clone()
    };
    (model, train)
}

const LOSS_WINDOW: usize = 100;

fn train_and_score<T: Scalar>(
    bundle: &DatasetBundle,
    vocab: &Vocab,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<(EpisodeReport, Model<f32>, LossTrace), EvalError> {
    let mut model: Model<T> = Model::init(model_cfg)?;
    let trace = train(&mut model, &bundle.train, vocab, train_cfg)?;
    let mut report = score_bundle(&GreedyDecoder::new(&model, vocab), bundle, seed)?;
    report.final_loss = trace.smoothed(LOSS_WINDOW).last().copied();
    Ok((report, model.cast(), trace))
}

/// Regenerates the datasets with `seed`, trains a fresh model and scores
/// every pair.
pub fn run_episode_full(
    corpus: &CorpusConfig,
    model: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<Episode, EvalError> {
    let (bundle, vocab) = episode_data(corpus, seed)?;
    let (model_cfg, train_cfg) = episode_configs(model, train, &vocab, seed);
    let (report, model, trace) = match train_cfg.precision {
        Precision::F32 => train_and_score::<f32>(&bundle, &vocab, model_cfg, &train_cfg, seed)?,
        Precision::F64 => train_and_score::<f64>(&bundle, &vocab, model_cfg, &train_cfg, seed)?,
    };
    Ok(Episode {
        report,
        bundle,
        vocab,
        model,
        trace,
    })
}

pub fn run_episode(
    corpus: &CorpusConfig,
    model: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<EpisodeReport, EvalError> {
    Ok(run_episode_full(corpus, model, train, seed)?.report)
}

/// Scores held-out data with the input echoed back, without training.
pub fn dry_run_episode(corpus: &CorpusConfig, seed: u64) -> Result<EpisodeReport, EvalError> {
    let (bundle, _) = episode_data(corpus, seed)?;
    score_bundle(&CopyInput, &bundle, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(o: &str, t: Task, pairs: &[(&str, &str)]) -> Vec<Sample> {
        pairs.iter().map(|&(i, out)| Sample::new(o, t, i, out).unwrap()).collect()
    }

    fn tiny_model(vocab: &Vocab, seed: u64) -> Model<f32> {
        Model::init(ModelConfig {
            block_size: 63,
            n_layer: 1,
            n_head: 2,
            n_embd: 16,
            vocab_size: vocab.len(),
            dropout_rate: 0.0,
            init_std: 0.5,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn exact_match_cases() {
        assert!(exact_match("job", "job"));
        assert!(!exact_match("jobs", "job"));
        assert!(!exact_match("liv9l", "lEv9l"));
        assert!(exact_match("", ""));
    }

    #[test]
    fn oracle_scores_full_and_constant_scores_zero() {
        let s = samples("en", Task::Write, &[("dʒɒb", "job"), ("kæt", "cat")]);
        assert_eq!(score_pair(&OracleStub, &s).unwrap().percent, 100.0);
        assert_eq!(score_pair(&Constant("z".into()), &s).unwrap().percent, 0.0);
        let half = score_pair(&Constant("job".into()), &s).unwrap();
        assert_eq!((half.correct, half.total, half.percent), (1, 2, 50.0));
    }

    #[test]
    fn score_pair_errors() {
        assert!(matches!(score_pair(&OracleStub, &[]), Err(EvalError::Empty)));
        let mut s = samples("en", Task::Write, &[("a", "a")]);
        s.extend(samples("en", Task::Read, &[("a", "a")]));
        assert!(matches!(score_pair(&OracleStub, &s), Err(EvalError::MixedPair(_))));
    }

    #[test]
    fn untrained_model_respects_output_contract() {
        let s = samples("ent", Task::Write, &[("amiko", "amiko"), ("tʃu", "tʃu"), ("ab", "ab")]);
        let vocab = Vocab::build(&s).unwrap();
        for seed in 0..4 {
            let model = tiny_model(&vocab, seed);
            let dec = GreedyDecoder::new(&model, &vocab);
            for p in dec.transduce(&s).unwrap() {
                assert!(p.chars().count() <= MAX_LEN);
                assert!(!p.contains('\u{0}') && !p.contains('\u{3}'));
            }
            let short = GreedyDecoder { max_len: 3, ..GreedyDecoder::new(&model, &vocab) };
            assert!(short.transduce(&s).unwrap().iter().all(|p| p.chars().count() <= 3));
        }
    }

    #[test]
    fn batched_decoding_matches_one_at_a_time() {
        let s = samples(
            "ent",
            Task::Read,
            &[("amiko", "amiko"), ("tʃu", "tʃu"), ("bona", "bona"), ("a", "a"), ("domoj", "domoj")],
        );
        let vocab = Vocab::build(&s).unwrap();
        let model = tiny_model(&vocab, 3);
        let dec = GreedyDecoder::new(&model, &vocab);
        let together = dec.transduce(&s).unwrap();
        for (sample, expected) in s.iter().zip(&together) {
            assert_eq!(&dec.predict("ent", Task::Read, &sample.input).unwrap(), expected);
        }
    }

    #[test]
    fn unknown_input_character_is_an_encoding_error() {
        let s = samples("ent", Task::Write, &[("ab", "ab")]);
        let vocab = Vocab::build(&s).unwrap();
        let model = tiny_model(&vocab, 0);
        let err = predict(&model, &vocab, "ent", Task::Write, "xyz", MAX_LEN).unwrap_err();
        assert!(matches!(err, EvalError::Codec(CodecError::UnknownChar { .. })));
    }

    #[test]
    fn argmax_prefers_lowest_id_and_skips_pad() {
        assert_eq!(argmax_skipping_pad(&[9.0f32, 1.0, 3.0, 3.0]), 2);
        assert_eq!(argmax_skipping_pad(&[0.0f64, 0.0, 0.0]), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn score_is_permutation_invariant(
            words in proptest::collection::vec("[a-d]{1,4}", 2..12),
            seed in any::<u64>(),
        ) {
            let pairs: Vec<(&str, &str)> = words.iter().map(|w| (w.as_str(), w.as_str())).collect();
            let s = samples("ent", Task::Write, &pairs);
            let vocab = Vocab::build(&s).unwrap();
            let model = tiny_model(&vocab, seed);
            let dec = GreedyDecoder::new(&model, &vocab);
            let mut shuffled = s.clone();
            shuffled.reverse();
            shuffled.rotate_left(seed as usize % s.len());
            let a = score_pair(&dec, &s).unwrap();
            let b = score_pair(&dec, &shuffled).unwrap();
            prop_assert_eq!(a.correct, b.correct);
            prop_assert_eq!(score_pair(&CopyInput, &shuffled).unwrap().percent, 100.0);
        }
    }
}
