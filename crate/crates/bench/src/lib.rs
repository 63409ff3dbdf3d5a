//! Fixtures shared by the benchmarks.

use orthodepth_core::codec::{to_training_block, TrainingBlock, Vocab};
use orthodepth_core::corpus::{build_dataset, esperanto_like_lexicon, make_eno};
use orthodepth_core::{Model, ModelConfig, Sample, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Deterministic values in [-1, 1).
pub fn random_values<T: Scalar>(n: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect()
}

/// Desk-sized ent + eno samples and their vocabulary.
pub fn baseline_samples(n_train: usize) -> (Vec<Sample>, Vec<Sample>, Vocab) {
    let ent = esperanto_like_lexicon(n_train + 128, 0);
    let eno = make_eno(&ent, 1);
    let lexicons = BTreeMap::from([("ent".to_string(), ent), ("eno".to_string(), eno)]);
    let bundle = build_dataset(&lexicons, n_train, 64, 2).expect("dataset");
    let vocab = Vocab::build(bundle.train.iter().chain(&bundle.test)).expect("vocab");
    (bundle.train, bundle.test, vocab)
}

pub fn blocks(samples: &[Sample], vocab: &Vocab, block_size: usize) -> Vec<TrainingBlock> {
    samples
        .iter()
        .map(|s| to_training_block(s, vocab, block_size).expect("fits"))
        .collect()
}

pub fn desk_model<T: Scalar>(vocab: &Vocab) -> Model<T> {
    Model::init(ModelConfig::desk(vocab.len())).expect("desk config")
}
