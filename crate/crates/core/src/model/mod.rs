//! Decoder-only character transformer.
//!
//! Pre-norm GPT blocks: `x + attn(ln1(x))` then `x + mlp(ln2(x))`, a final
//! layer norm and a bias-free output head. Token and position embeddings are
//! learned; nothing is weight-tied.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Parameter arrays per transformer block.
const PER_LAYER: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub block_size: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_embd: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// 63-token blocks, 4 layers, 4 heads, 336-wide embeddings.
    pub fn paper(vocab_size: usize) -> Self {
        Self {
            block_size: 63,
            n_layer: 4,
            n_head: 4,
            n_embd: 336,
            vocab_size,
            dropout_rate: 0.1,
            init_std: 0.02,
            seed: 0,
        }
    }

    /// CPU-sized model with the same block size.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            block_size: 63,
            n_layer: 2,
            n_head: 2,
            n_embd: 128,
            vocab_size,
            dropout_rate: 0.0,
            init_std: 0.02,
            seed: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.n_embd / self.n_head
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::Config(reason));
        if self.block_size == 0 || self.n_head == 0 || self.n_embd == 0 || self.vocab_size == 0 {
            return bad(format!(
                "block_size, n_head, n_embd and vocab_size must be positive: {self:?}"
            ));
        }
        if self.n_embd % self.n_head != 0 {
            return bad(format!(
                "n_embd {} is not divisible by n_head {}",
                self.n_embd, self.n_head
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std {} must be positive", self.init_std));
        }
        Ok(())
    }
}

/// Closed-form parameter count broken down by component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamBreakdown {
    pub token_embedding: usize,
    pub position_embedding: usize,
    pub blocks: usize,
    pub final_norm: usize,
    pub head: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.token_embedding + self.position_embedding + self.blocks + self.final_norm + self.head
    }

    /// Everything except the two vocabulary-sized matrices.
    pub fn vocab_independent(&self) -> usize {
        self.position_embedding + self.blocks + self.final_norm
    }
}

pub fn param_breakdown(config: &ModelConfig) -> ParamBreakdown {
    let d = config.n_embd;
    ParamBreakdown {
        token_embedding: config.vocab_size * d,
        position_embedding: config.block_size * d,
        // qkv 3d²+3d, projection d²+d, mlp 8d²+5d, two norms 4d
        blocks: config.n_layer * (12 * d * d + 13 * d),
        final_norm: 2 * d,
        head: d * config.vocab_size,
    }
}

/// `vocab·d + block·d + L·(12d² + 13d) + 2d + d·vocab`
pub fn count_params(config: &ModelConfig) -> usize {
    param_breakdown(config).total()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence length {len} outside 1..={block_size}")]
    Length { len: usize, block_size: usize },
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    Token { id: usize, vocab_size: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Dropout behaviour of a forward pass.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Handles produced by [`Model::forward_on_tape`].
#[derive(Debug)]
pub struct Forward {
    pub params: Vec<Var>,
    pub logits: Var,
    /// Packed query/key/value input of each layer's attention.
    pub qkv: Vec<Var>,
}

/// The full parameter set. Arrays are kept in a fixed manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Model<T> {
    /// Normal(0, init_std) weights, unit norm gains, zero biases.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).expect("validated std");
        let mut params = Vec::new();
        for (_, shape, kind) in manifest(&config) {
            let len: usize = shape.iter().product();
            let data = match kind {
                Init::Normal => (0..len).map(|_| T::of(normal.sample(&mut rng))).collect(),
                Init::Ones => vec![T::one(); len],
                Init::Zeros => vec![T::zero(); len],
            };
            params.push(Tensor::new(&shape, data)?);
        }
        Ok(Self { config, params })
    }

    /// Rebuilds a model from arrays in manifest order.
    pub fn from_params(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = manifest(&config);
        if layout.len() != params.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter arrays, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape, _), p) in layout.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(ModelError::Config(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        manifest(&self.config).into_iter().map(|(n, _, _)| n).collect()
    }

    /// Parameter count by enumerating the actual arrays.
    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    fn check_tokens(&self, tokens: &[usize], seq: usize) -> Result<(), ModelError> {
        if seq == 0 || seq > self.config.block_size {
            return Err(ModelError::Length {
                len: seq,
                block_size: self.config.block_size,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(ModelError::Token {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Records a forward pass over `batch` sequences of `seq` tokens each
    /// (`tokens` is row-major `[batch × seq]`).
    ///
    /// With `with_grad` the parameters enter the tape as differentiable
    /// leaves. `rows`, when given, restricts the logits to those flattened
    /// positions.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        tokens: &[usize],
        batch: usize,
        seq: usize,
        mode: Mode<'_>,
        with_grad: bool,
        rows: Option<&[usize]>,
    ) -> Result<Forward, ModelError> {
        if tokens.len() != batch * seq || batch == 0 {
            return Err(ModelError::Length {
                len: tokens.len(),
                block_size: self.config.block_size,
            });
        }
        self.check_tokens(tokens, seq)?;
        let cfg = &self.config;
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                let mut p = p.clone();
                p.clear_grad();
                p.set_requires_grad(with_grad);
                tape.leaf(p)
            })
            .collect();
        let (mut rng, rate) = match mode {
            Mode::Eval => (None, 0.0),
            Mode::Train(rng) => (Some(rng), cfg.dropout_rate),
        };
        let eps = T::of(LAYER_NORM_EPS);
        let positions: Vec<usize> = (0..batch).flat_map(|_| 0..seq).collect();

        let tok = tape.gather_rows(params[0], tokens)?;
        let pos = tape.gather_rows(params[1], &positions)?;
        let mut x = tape.add(tok, pos)?;
        if let Some(rng) = rng.as_deref_mut() {
            x = tape.dropout(x, rate, rng)?;
        }
        let mut qkv_vars = Vec::with_capacity(cfg.n_layer);
        for layer in 0..cfg.n_layer {
            let p = &params[2 + layer * PER_LAYER..2 + (layer + 1) * PER_LAYER];
            let h = tape.layer_norm(x, p[0], p[1], eps)?;
            let qkv = linear(tape, h, p[2], p[3])?;
            let att = tape.causal_attention(qkv, batch, seq, cfg.n_head)?;
            qkv_vars.push(qkv);
            let mut proj = linear(tape, att, p[4], p[5])?;
            if let Some(rng) = rng.as_deref_mut() {
                proj = tape.dropout(proj, rate, rng)?;
            }
            x = tape.add(x, proj)?;
            let h = tape.layer_norm(x, p[6], p[7], eps)?;
            let up = linear(tape, h, p[8], p[9])?;
            let act = tape.gelu(up)?;
            let mut down = linear(tape, act, p[10], p[11])?;
            if let Some(rng) = rng.as_deref_mut() {
                down = tape.dropout(down, rate, rng)?;
            }
            x = tape.add(x, down)?;
        }
        if let Some(rows) = rows {
            x = tape.gather_rows(x, rows)?;
        }
        let tail = 2 + cfg.n_layer * PER_LAYER;
        let h = tape.layer_norm(x, params[tail], params[tail + 1], eps)?;
        let logits = tape.matmul(h, params[tail + 2])?;
        Ok(Forward {
            params,
            logits,
            qkv: qkv_vars,
        })
    }

    /// Logits `[T × vocab_size]` for one sequence.
    ///
    /// Train mode applies dropout with an RNG derived from the config seed.
    pub fn forward(&self, tokens: &[usize], train_mode: bool) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_d20f);
        let mode = if train_mode {
            Mode::Train(&mut rng)
        } else {
            Mode::Eval
        };
        let fwd = self.forward_on_tape(&mut tape, tokens, 1, tokens.len(), mode, false, None)?;
        Ok(tape.take(fwd.logits)?)
    }

    /// Per-layer attention probabilities `[heads × T × T]` for one sequence.
    pub fn attention_maps(&self, tokens: &[usize]) -> Result<Vec<Vec<T>>, ModelError> {
        self.check_tokens(tokens, tokens.len())?;
        let mut tape = Tape::new();
        let fwd = self.forward_on_tape(&mut tape, tokens, 1, tokens.len(), Mode::Eval, false, None)?;
        let d = self.config.n_embd;
        let maps = fwd
            .qkv
            .into_iter()
            .map(|qkv| {
                let (_, probs) = crate::autodiff::attention_forward(
                    tape.data(qkv),
                    1,
                    tokens.len(),
                    self.config.n_head,
                    d,
                );
                probs
            })
            .collect();
        Ok(maps)
    }
}

fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal,
    Ones,
    Zeros,
}

/// Names, shapes and initializers of every parameter array, in order.
fn manifest(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = config.n_embd;
    let mut out = vec![
        ("tok_emb".to_string(), vec![config.vocab_size, d], Init::Normal),
        ("pos_emb".to_string(), vec![config.block_size, d], Init::Normal),
    ];
    for l in 0..config.n_layer {
        let p = |s: &str| format!("h{l}.{s}");
        out.extend([
            (p("ln1.weight"), vec![d], Init::Ones),
            (p("ln1.bias"), vec![d], Init::Zeros),
            (p("attn.qkv.weight"), vec![d, 3 * d], Init::Normal),
            (p("attn.qkv.bias"), vec![3 * d], Init::Zeros),
            (p("attn.proj.weight"), vec![d, d], Init::Normal),
            (p("attn.proj.bias"), vec![d], Init::Zeros),
            (p("ln2.weight"), vec![d], Init::Ones),
            (p("ln2.bias"), vec![d], Init::Zeros),
            (p("mlp.fc.weight"), vec![d, 4 * d], Init::Normal),
            (p("mlp.fc.bias"), vec![4 * d], Init::Zeros),
            (p("mlp.proj.weight"), vec![4 * d, d], Init::Normal),
            (p("mlp.proj.bias"), vec![d], Init::Zeros),
        ]);
    }
    out.extend([
        ("ln_f.weight".to_string(), vec![d], Init::Ones),
        ("ln_f.bias".to_string(), vec![d], Init::Zeros),
        ("head.weight".to_string(), vec![d, config.vocab_size], Init::Normal),
    ]);
    out
}

pub(crate) fn manifest_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    manifest(config).into_iter().map(|(n, s, _)| (n, s)).collect()
}
