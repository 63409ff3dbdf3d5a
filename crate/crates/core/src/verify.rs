//! Self-checks: central finite differences against the tape's gradients,
//! parameter-count enumeration and causal masking.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{AutodiffError, Scalar, Tape, Tensor, Var};
use crate::model::{count_params, param_breakdown, Mode, Model, ModelConfig};

/// Differentiable operations covered by [`gradient_checks`].
pub const CHECKED_OPS: [&str; 12] = [
    "matmul",
    "add",
    "add_bias",
    "scale",
    "sum",
    "gather_rows",
    "layer_norm",
    "gelu",
    "dropout",
    "causal_attention",
    "softmax_cross_entropy",
    "transformer",
];

/// Largest accepted relative gradient error at each precision.
pub fn tolerance<T: Scalar>() -> f64 {
    if T::NAME == "f32" {
        1e-3
    } else {
        1e-6
    }
}

/// Central-difference step. Reference values are always taken in f64.
const STEP: f64 = 1.0 / 131072.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub op: &'static str,
    pub precision: &'static str,
    pub rel_error: f64,
    pub tolerance: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.rel_error <= self.tolerance
    }
}

fn randn<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z * scale)
        })
        .collect();
    Tensor::new(shape, data).expect("valid shape")
}

type Build<'a, T> = dyn Fn(&mut Tape<T>, &[Var]) -> Result<(Var, Vec<Var>), AutodiffError> + 'a;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gradient of the projection `seed · output` with respect to every input,
/// flattened in input order.
#[derive(Debug, Clone, Default)]
struct Gradients {
    analytic: Vec<f64>,
    /// Fourth-order central differences; empty unless requested.
    numeric: Vec<f64>,
}

/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn fd_case<T: Scalar>(
    inputs: &[Tensor<T>],
    build: &Build<'_, T>,
    rng: &mut ChaCha8Rng,
    with_numeric: bool,
) -> Result<Gradients, AutodiffError> {
    let eval = |values: &[Tensor<T>], seed: Option<&[T]>, grad: bool| -> Result<(f64, Vec<Vec<T>>, usize), AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.set_requires_grad(grad);
                tape.leaf(t)
            })
            .collect();
        let (out, grad_vars) = build(&mut tape, &vars)?;
        let len = tape.data(out).len();
        let Some(seed) = seed else {
            return Ok((0.0, Vec::new(), len));
        };
        let value = tape
            .data(out)
            .iter()
            .zip(seed)
            .map(|(&o, &w)| o.as_f64() * w.as_f64())
            .sum();
        if !grad {
            return Ok((value, Vec::new(), len));
        }
        tape.backward_with(out, seed)?;
        let grads = grad_vars
            .iter()
            .zip(values)
            .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![T::zero(); t.len()], <[T]>::to_vec))
            .collect();
        Ok((value, grads, len))
    };
    // on a 2^-12 grid the inputs are exact at both precisions and every
    // stencil point x ± k·h is exact in f64
    let inputs: Vec<Tensor<T>> = inputs
        .iter()
        .map(|t| {
            let mut t = t.clone();
            for v in t.data_mut() {
                *v = T::of((v.as_f64() * 4096.0).round() / 4096.0);
            }
            t
        })
        .collect();
    let inputs = &inputs[..];
    let (_, _, out_len) = eval(inputs, None, false)?;
    let seed: Vec<T> = randn::<T>(rng, &[out_len], 1.0).data().to_vec();
    let (_, analytic, _) = eval(inputs, Some(&seed), true)?;
    let analytic = analytic.iter().flatten().map(|v| v.as_f64()).collect();
    if !with_numeric {
        return Ok(Gradients {
            analytic,
            numeric: Vec::new(),
        });
    }

    let h = STEP;
    let mut numeric = Vec::new();
    let mut values = inputs.to_vec();
    for i in 0..values.len() {
        for j in 0..values[i].len() {
            let orig = values[i].data()[j];
            let mut at = |offset: f64| -> Result<f64, AutodiffError> {
                values[i].data_mut()[j] = T::of(orig.as_f64() + offset);
                let v = eval(&values, Some(&seed), false)?.0;
                values[i].data_mut()[j] = orig;
                Ok(v)
            };
            let near = at(h)? - at(-h)?;
            let far = at(2.0 * h)? - at(-2.0 * h)?;
            numeric.push((8.0 * near - far) / (12.0 * h));
        }
    }
    Ok(Gradients { analytic, numeric })
}

fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

fn op_case<T: Scalar>(op: &'static str, rng: &mut ChaCha8Rng, numeric: bool) -> Result<Gradients, AutodiffError> {
    let own = |vars: &[Var], out: Var| Ok((out, vars.to_vec()));
    match op {
        "matmul" => {
            let (n, k, m) = (dims(rng, 1, 5), dims(rng, 1, 5), dims(rng, 1, 5));
            let inputs = [randn(rng, &[n, k], 1.0), randn(rng, &[k, m], 1.0)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.matmul(v[0], v[1])?), rng, numeric)
        }
        "add" => {
            let (n, m) = (dims(rng, 1, 5), dims(rng, 1, 5));
            let inputs = [randn(rng, &[n, m], 1.0), randn(rng, &[n, m], 1.0)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.add(v[0], v[1])?), rng, numeric)
        }
        "add_bias" => {
            let (n, m) = (dims(rng, 1, 5), dims(rng, 1, 5));
            let inputs = [randn(rng, &[n, m], 1.0), randn(rng, &[m], 1.0)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.add_bias(v[0], v[1])?), rng, numeric)
        }
        "scale" => {
            let (n, m) = (dims(rng, 1, 5), dims(rng, 1, 5));
            let factor = T::of(rng.random_range(-2.0..2.0));
            let inputs = [randn(rng, &[n, m], 1.0)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.scale(v[0], factor)?), rng, numeric)
        }
        "sum" => {
            let (n, m) = (dims(rng, 1, 5), dims(rng, 1, 5));
            let inputs = [randn(rng, &[n, m], 1.0)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.sum(v[0])?), rng, numeric)
        }
        "gather_rows" => {
            let (rows, width) = (dims(rng, 1, 5), dims(rng, 1, 4));
            let ids: Vec<usize> = (0..dims(rng, 1, 8)).map(|_| rng.random_range(0..rows)).collect();
            let inputs = [randn(rng, &[rows, width], 1.0)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.gather_rows(v[0], &ids)?), rng, numeric)
        }
        "layer_norm" => {
            let (n, m) = (dims(rng, 1, 4), dims(rng, 2, 6));
            let inputs = [
                randn(rng, &[n, m], 1.0),
                randn(rng, &[m], 1.0),
                randn(rng, &[m], 1.0),
            ];
            let eps = T::of(crate::model::LAYER_NORM_EPS);
            fd_case::<T>(&inputs, &|t, v| own(v, t.layer_norm(v[0], v[1], v[2], eps)?), rng, numeric)
        }
        "gelu" => {
            let (n, m) = (dims(rng, 1, 5), dims(rng, 1, 5));
            let inputs = [randn(rng, &[n, m], 1.5)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.gelu(v[0])?), rng, numeric)
        }
        "dropout" => {
            let (n, m) = (dims(rng, 1, 5), dims(rng, 1, 5));
            let rate = rng.random_range(0.1..0.6);
            let mask_seed = rng.random::<u64>();
            let inputs = [randn(rng, &[n, m], 1.0)];
            fd_case::<T>(
                &inputs,
                &|t, v| {
                    let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
                    own(v, t.dropout(v[0], rate, &mut r)?)
                },
                rng,
                numeric,
            )
        }
        "causal_attention" => {
            let (batch, seq, heads, hd) = (dims(rng, 1, 2), dims(rng, 1, 4), dims(rng, 1, 2), dims(rng, 1, 3));
            let inputs = [randn(rng, &[batch * seq, 3 * heads * hd], 1.0)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.causal_attention(v[0], batch, seq, heads)?), rng, numeric)
        }
        "softmax_cross_entropy" => {
            let (n, c) = (dims(rng, 1, 5), dims(rng, 2, 6));
            let mut targets: Vec<Option<usize>> = (0..n)
                .map(|_| rng.random_bool(0.7).then(|| rng.random_range(0..c)))
                .collect();
            targets[0] = Some(rng.random_range(0..c));
            let inputs = [randn(rng, &[n, c], 1.5)];
            fd_case::<T>(&inputs, &|t, v| own(v, t.softmax_cross_entropy(v[0], &targets)?), rng, numeric)
        }
        "transformer" => transformer_case::<T>(rng, numeric),
        other => unreachable!("unknown op {other}"),
    }
}

fn transformer_case<T: Scalar>(rng: &mut ChaCha8Rng, numeric: bool) -> Result<Gradients, AutodiffError> {
    let heads = dims(rng, 1, 2);
    let config = ModelConfig {
        block_size: 5,
        n_layer: dims(rng, 1, 2),
        n_head: heads,
        n_embd: heads * dims(rng, 1, 3),
        vocab_size: dims(rng, 3, 6),
        dropout_rate: 0.0,
        init_std: 0.5,
        seed: rng.random(),
    };
    let model: Model<T> = Model::init(config.clone()).expect("valid config");
    let (batch, seq) = (dims(rng, 1, 2), dims(rng, 1, 5));
    let tokens: Vec<usize> = (0..batch * seq)
        .map(|_| rng.random_range(0..config.vocab_size))
        .collect();
    let mut targets: Vec<Option<usize>> = (0..batch * seq)
        .map(|_| rng.random_bool(0.8).then(|| rng.random_range(0..config.vocab_size)))
        .collect();
    targets[0] = Some(0);
    let inputs = model.params().to_vec();
    fd_case::<T>(
        &inputs,
        &|t, v| {
            let params = v.iter().map(|&p| t.value(p).cloned()).collect::<Result<Vec<_>, _>>()?;
            let m = Model::from_params(config.clone(), params).expect("same manifest");
            let fwd = m
                .forward_on_tape(t, &tokens, batch, seq, Mode::Eval, true, None)
                .expect("valid tokens");
            let loss = t.softmax_cross_entropy(fwd.logits, &targets)?;
            Ok((loss, fwd.params))
        },
        rng,
        numeric,
    )
}

/// `cases_per_op` randomized finite-difference checks of every entry in
/// [`CHECKED_OPS`]. The analytic gradient is computed at precision `T`; the
/// central differences replay the same case in f64.
pub fn gradient_checks<T: Scalar>(cases_per_op: usize, seed: u64) -> Result<Vec<CaseResult>, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cases_per_op * CHECKED_OPS.len());
    for op in CHECKED_OPS {
        for _ in 0..cases_per_op {
            let mut replay = rng.clone();
            let analytic = op_case::<T>(op, &mut rng, false)?.analytic;
            let numeric = op_case::<f64>(op, &mut replay, true)?.numeric;
            out.push(CaseResult {
                op,
                precision: T::NAME,
                rel_error: rel_error(&analytic, &numeric),
                tolerance: tolerance::<T>(),
            });
        }
    }
    Ok(out)
}

fn random_config(rng: &mut ChaCha8Rng) -> ModelConfig {
    let heads = dims(rng, 1, 4);
    ModelConfig {
        block_size: dims(rng, 1, 16),
        n_layer: dims(rng, 0, 3),
        n_head: heads,
        n_embd: heads * dims(rng, 1, 6),
        vocab_size: dims(rng, 2, 40),
        dropout_rate: 0.0,
        init_std: 0.02,
        seed: rng.random(),
    }
}

/// Compares the closed-form count with the sizes of the arrays actually
/// allocated, on `n` random configurations. Returns the mismatches.
pub fn param_count_checks(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for _ in 0..n {
        let config = random_config(&mut rng);
        let model: Model<f32> = Model::init(config.clone()).expect("valid config");
        let enumerated: usize = model.params().iter().map(Tensor::len).sum();
        let formula = count_params(&config);
        if enumerated != formula || param_breakdown(&config).total() != formula {
            failures.push(format!("{config:?}: enumerated {enumerated}, formula {formula}"));
        }
    }
    failures
}

/// Perturbs tokens after a random cut and checks that eval-mode logits up
/// to the cut are bit-for-bit unchanged. Returns the violations.
pub fn causality_checks(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut model: Option<Model<f32>> = None;
    for case in 0..n {
        if case % 50 == 0 {
            let mut config = random_config(&mut rng);
            config.block_size = dims(&mut rng, 2, 16);
            config.init_std = 0.5;
            model = Some(Model::init(config).expect("valid config"));
        }
        let m = model.as_ref().expect("initialised above");
        let cfg = m.config();
        let len = dims(&mut rng, 2, cfg.block_size);
        let cut = rng.random_range(0..len - 1);
        let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(0..cfg.vocab_size)).collect();
        let mut perturbed = tokens.clone();
        for t in &mut perturbed[cut + 1..] {
            *t = rng.random_range(0..cfg.vocab_size);
        }
        let a = m.forward(&tokens, false).expect("valid tokens");
        let b = m.forward(&perturbed, false).expect("valid tokens");
        let keep = (cut + 1) * cfg.vocab_size;
        if a.data()[..keep] != b.data()[..keep] {
            failures.push(format!("case {case}: logits before position {} changed", cut + 1));
        }
    }
    failures
}

/// Outcome of [`run_all`].
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub gradient_cases: Vec<CaseResult>,
    pub param_configs: usize,
    pub param_failures: Vec<String>,
    pub causality_cases: usize,
    pub causality_failures: Vec<String>,
    pub duration: Duration,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.gradient_cases.iter().all(CaseResult::passed)
            && self.param_failures.is_empty()
            && self.causality_failures.is_empty()
    }

    pub fn worst(&self, op: &str, precision: &str) -> Option<f64> {
        self.gradient_cases
            .iter()
            .filter(|c| c.op == op && c.precision == precision)
            .map(|c| c.rel_error)
            .reduce(f64::max)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>12} {:>12}", "gradient check", "f32 worst", "f64 worst")?;
        for op in CHECKED_OPS {
            let cell = |p| self.worst(op, p).map_or("-".into(), |e| format!("{e:.2e}"));
            writeln!(f, "{:<24} {:>12} {:>12}", op, cell("f32"), cell("f64"))?;
        }
        let failed = self.gradient_cases.iter().filter(|c| !c.passed()).count();
        writeln!(
            f,
            "gradient cases: {} run, {} failed (tolerance 1e-3 f32, 1e-6 f64)",
            self.gradient_cases.len(),
            failed
        )?;
        writeln!(
            f,
            "parameter count: {} configs, {} mismatches",
            self.param_configs,
            self.param_failures.len()
        )?;
        writeln!(
            f,
            "causality: {} cases, {} violations",
            self.causality_cases,
            self.causality_failures.len()
        )?;
        for msg in self.param_failures.iter().chain(&self.causality_failures).take(10) {
            writeln!(f, "  {msg}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Gradient checks at both precisions, parameter counting and causality.
pub fn run_all(cases_per_op: usize, param_configs: usize, causality_cases: usize, seed: u64) -> Result<VerifyReport, AutodiffError> {
    let start = Instant::now();
    let mut gradient_cases = gradient_checks::<f32>(cases_per_op, seed)?;
    gradient_cases.extend(gradient_checks::<f64>(cases_per_op, seed)?);
    Ok(VerifyReport {
        gradient_cases,
        param_configs,
        param_failures: param_count_checks(param_configs, seed),
        causality_cases,
        causality_failures: causality_checks(causality_cases, seed),
        duration: start.elapsed(),
    })
}
