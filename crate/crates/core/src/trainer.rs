//! Mini-batch training with Adam, warmup + cosine learning-rate decay and
//! global gradient-norm clipping.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{adam_step, AdamHyper, AdamState, AutodiffError, Scalar, Tape, Tensor};
use crate::codec::{to_training_block, CodecError, Sample, TrainingBlock, Vocab};
use crate::model::{Mode, Model, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub eval_interval: usize,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            batch_size: 256,
            max_steps: 20_000,
            learning_rate: 5e-4,
            warmup_steps: 200,
            final_lr_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            epsilon: 1e-8,
            grad_clip: Some(1.0),
            seed: 0,
            eval_interval: 1_000,
            precision: Precision::F32,
        }
    }

    pub fn desk() -> Self {
        Self {
            batch_size: 64,
            max_steps: 3_000,
            learning_rate: 1e-3,
            warmup_steps: 150,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_steps > 0 && self.warmup_steps >= self.max_steps {
            return bad(format!(
                "warmup_steps {} must be below max_steps {}",
                self.warmup_steps, self.max_steps
            ));
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("learning_rate must be positive and final_lr_fraction in [0,1]".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0,1)".into());
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip must be positive".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Linear warmup from 0 to `learning_rate`, then cosine decay to
/// `final_lr_fraction · learning_rate` at `max_steps`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let peak = cfg.learning_rate;
    if step < cfg.warmup_steps {
        return peak * step as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.max_steps.saturating_sub(cfg.warmup_steps);
    if span == 0 {
        return peak;
    }
    let progress = ((step - cfg.warmup_steps) as f64 / span as f64).min(1.0);
    let f = cfg.final_lr_fraction;
    peak * (f + (1.0 - f) * 0.5 * (1.0 + (PI * progress).cos()))
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("batch_size {batch_size} exceeds the {available} training samples")]
    NotEnoughSamples { batch_size: usize, available: usize },
    #[error("divergence: non-finite loss at step {step}")]
    Divergence { step: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint hook failed: {0}")]
    Hook(String),
}

/// Training loss per optimizer step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub points: Vec<(usize, f64)>,
    pub duration: Duration,
}

impl LossTrace {
    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|&(_, l)| l)
    }

    /// Mean loss over consecutive windows of `width` steps.
    pub fn smoothed(&self, width: usize) -> Vec<f64> {
        self.points
            .chunks(width.max(1))
            .map(|c| c.iter().map(|&(_, l)| l).sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// `step,loss` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for &(step, loss) in &self.points {
            writeln!(out, "{step},{loss}").expect("string write");
        }
        out
    }
}

/// Shuffled epochs over `0..n`; each epoch visits every index once.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl EpochSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            cursor: 0,
            rng,
            epoch: 0,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
                self.epoch += 1;
            }
            let take = (size - batch.len()).min(self.order.len() - self.cursor);
            batch.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        batch
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(params: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .filter_map(Tensor::grad)
        .flat_map(|g| g.iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let factor = T::of(max_norm / (norm + 1e-6));
        for p in params.iter_mut() {
            if let Some(g) = p.grad_mut() {
                g.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }
    norm
}

/// Packs blocks into a `[batch × seq]` token grid trimmed to the longest
/// used prefix. Positions past a block's end only see padding, and causal
/// attention keeps them from influencing real positions.
pub fn pack_batch(blocks: &[&TrainingBlock]) -> (Vec<usize>, Vec<Option<usize>>, usize) {
    let seq = blocks.iter().map(|b| b.used()).max().unwrap_or(1).max(1);
    let mut tokens = Vec::with_capacity(blocks.len() * seq);
    let mut targets = Vec::with_capacity(blocks.len() * seq);
    for b in blocks {
        tokens.extend_from_slice(&b.x[..seq]);
        targets.extend_from_slice(&b.y[..seq]);
    }
    (tokens, targets, seq)
}

/// Loss and gradients for one packed batch. Gradients are added to the
/// model's parameter gradient buffers.
pub fn loss_and_grad<T: Scalar>(
    model: &mut Model<T>,
    tokens: &[usize],
    targets: &[Option<usize>],
    batch: usize,
    seq: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let fwd = model.forward_on_tape(&mut tape, tokens, batch, seq, Mode::Train(rng), true, None)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, targets)?;
    let value = tape.data(loss)[0].as_f64();
    tape.backward(loss)?;
    for (param, var) in model.params_mut().iter_mut().zip(&fwd.params) {
        if let Some(g) = tape.grad(*var) {
            param.accumulate_grad(g)?;
        }
    }
    Ok(value)
}

pub fn train<T: Scalar>(
    model: &mut Model<T>,
    samples: &[Sample],
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<LossTrace, TrainError> {
    train_with(model, samples, vocab, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `hook(step, model)` every `eval_interval` steps
/// and once after the final step.
pub fn train_with<T, F>(
    model: &mut Model<T>,
    samples: &[Sample],
    vocab: &Vocab,
    cfg: &TrainConfig,
    mut hook: F,
) -> Result<LossTrace, TrainError>
where
    T: Scalar,
    F: FnMut(usize, &Model<T>) -> Result<(), TrainError>,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut trace = LossTrace::default();
    if cfg.max_steps == 0 {
        return Ok(trace);
    }
    if cfg.batch_size > samples.len() {
        return Err(TrainError::NotEnoughSamples {
            batch_size: cfg.batch_size,
            available: samples.len(),
        });
    }
    let block_size = model.config().block_size;
    let blocks = samples
        .iter()
        .map(|s| to_training_block(s, vocab, block_size))
        .collect::<Result<Vec<_>, _>>()?;

    let mut sampler = EpochSampler::new(blocks.len(), cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut states: Vec<AdamState<T>> = model
        .params()
        .iter()
        .map(|p| AdamState::new(p.len(), cfg.adam()))
        .collect();

    for step in 1..=cfg.max_steps {
        let picked = sampler.next_batch(cfg.batch_size);
        let batch: Vec<&TrainingBlock> = picked.iter().map(|&i| &blocks[i]).collect();
        let (tokens, targets, seq) = pack_batch(&batch);

        model.zero_grads();
        let loss = loss_and_grad(model, &tokens, &targets, batch.len(), seq, &mut dropout_rng)?;
        if !loss.is_finite() {
            return Err(TrainError::Divergence { step });
        }
        if let Some(max_norm) = cfg.grad_clip {
            clip_grad_norm(model.params_mut(), max_norm);
        }
        let lr = lr_at(step, cfg);
        for (param, state) in model.params_mut().iter_mut().zip(states.iter_mut()) {
            state.hyper.learning_rate = lr;
            let grad = param.grad().map(<[T]>::to_vec);
            if let Some(grad) = grad {
                adam_step(param.data_mut(), &grad, state)?;
            }
        }
        trace.points.push((step, loss));
        if cfg.eval_interval > 0 && step % cfg.eval_interval == 0 && step != cfg.max_steps {
            hook(step, model)?;
        }
    }
    hook(cfg.max_steps, model)?;
    trace.duration = start.elapsed();
    Ok(trace)
}
