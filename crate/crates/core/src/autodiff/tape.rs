//! Operation recording and reverse-mode gradient propagation.
//!
//! A [`Tape`] owns every tensor produced during a forward pass. Operations
//! return lightweight [`Var`] handles; [`Tape::backward`] walks the record
//! list in reverse and leaves `dLoss/dLeaf` in each differentiable leaf.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::kernels::{self, Trans};
use super::{AutodiffError, Scalar, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a tensor recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op<T> {
    Matmul {
        a: usize,
        b: usize,
        n: usize,
        k: usize,
        m: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    AddBias {
        x: usize,
        bias: usize,
        cols: usize,
    },
    Scale {
        x: usize,
        factor: T,
    },
    Sum {
        x: usize,
    },
    Gather {
        table: usize,
        ids: Vec<usize>,
        cols: usize,
    },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        cols: usize,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu {
        x: usize,
        tanh: Vec<T>,
    },
    Dropout {
        x: usize,
        mask: Vec<T>,
    },
    CausalAttention {
        qkv: usize,
        batch: usize,
        seq: usize,
        heads: usize,
        probs: Vec<T>,
    },
    SoftmaxCrossEntropy {
        logits: usize,
        targets: Vec<Option<usize>>,
        cols: usize,
        probs: Vec<T>,
        active: usize,
    },
}

#[derive(Debug)]
struct Record<T> {
    output: usize,
    op: Op<T>,
}

/// Ordered record of tensor operations.
///
/// Every record's inputs are earlier nodes, so reverse record order is a
/// valid topological order for backpropagation.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Tensor<T>>,
    needs_grad: Vec<bool>,
    records: Vec<Record<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            needs_grad: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Records a leaf. It receives a gradient iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs = tensor.requires_grad();
        self.push(tensor, needs)
    }

    pub fn value(&self, var: Var) -> Result<&Tensor<T>, AutodiffError> {
        self.check(var)?;
        Ok(&self.nodes[var.index])
    }

    pub fn data(&self, var: Var) -> &[T] {
        self.node(var).data()
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.node(var).shape()
    }

    pub fn grad(&self, var: Var) -> Option<&[T]> {
        self.nodes.get(var.index).filter(|_| var.tape == self.id)?.grad()
    }

    /// Removes the tensor behind `var`, leaving an empty placeholder.
    pub fn take(&mut self, var: Var) -> Result<Tensor<T>, AutodiffError> {
        self.check(var)?;
        let placeholder = Tensor::scalar(T::zero());
        Ok(std::mem::replace(&mut self.nodes[var.index], placeholder))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn zero_grads(&mut self) {
        self.nodes.iter_mut().for_each(Tensor::zero_grad);
    }

    fn push(&mut self, tensor: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(tensor);
        self.needs_grad.push(needs_grad);
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn record(&mut self, out: Tensor<T>, inputs: &[usize], op: Op<T>) -> Var {
        let needs = inputs.iter().any(|&i| self.needs_grad[i]);
        let var = self.push(out, needs);
        if needs {
            self.records.push(Record {
                output: var.index,
                op,
            });
        }
        var
    }

    fn check(&self, var: Var) -> Result<(), AutodiffError> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(AutodiffError::NotOnTape);
        }
        Ok(())
    }

    fn node(&self, var: Var) -> &Tensor<T> {
        assert_eq!(var.tape, self.id, "variable belongs to a different tape");
        &self.nodes[var.index]
    }

    /// `[n×k] · [k×m] -> [n×m]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (&[n, k], &[k2, m]) = (sa, sb) else {
            return Err(shape_err("matmul", sa, sb));
        };
        if k != k2 {
            return Err(shape_err("matmul", sa, sb));
        }
        let mut out = vec![T::zero(); n * m];
        kernels::gemm(
            n,
            k,
            m,
            self.data(a),
            Trans::No,
            self.data(b),
            Trans::No,
            &mut out,
            false,
        );
        let out = Tensor::new(&[n, m], out)?;
        Ok(self.record(
            out,
            &[a.index, b.index],
            Op::Matmul {
                a: a.index,
                b: b.index,
                n,
                k,
                m,
            },
        ))
    }

    /// Elementwise sum of two same-shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.record(out, &[a.index, b.index], Op::Add { a: a.index, b: b.index }))
    }

    /// Adds a `[d]` bias to every row of a `[rows×d]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, AutodiffError> {
        self.check(x)?;
        self.check(bias)?;
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let cols = match (sx, sb) {
            (&[_, c], &[d]) if c == d => c,
            _ => return Err(shape_err("add_bias", sx, sb)),
        };
        let mut data = self.data(x).to_vec();
        let b = self.data(bias);
        for row in data.chunks_exact_mut(cols) {
            row.iter_mut().zip(b).for_each(|(v, &b)| *v += b);
        }
        let out = Tensor::new(self.shape(x), data)?;
        Ok(self.record(
            out,
            &[x.index, bias.index],
            Op::AddBias {
                x: x.index,
                bias: bias.index,
                cols,
            },
        ))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let data = self.data(x).iter().map(|&v| v * factor).collect();
        let out = Tensor::new(self.shape(x), data)?;
        Ok(self.record(out, &[x.index], Op::Scale { x: x.index, factor }))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let total = self.data(x).iter().fold(T::zero(), |acc, &v| acc + v);
        Ok(self.record(Tensor::scalar(total), &[x.index], Op::Sum { x: x.index }))
    }

    /// Selects rows of a `[rows×d]` table, e.g. an embedding lookup.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        self.check(table)?;
        let (rows, cols) = match self.shape(table) {
            &[r, c] => (r, c),
            s => return Err(shape_err("gather_rows", s, &[ids.len()])),
        };
        if ids.is_empty() {
            return Err(AutodiffError::InvalidShape { shape: vec![0, cols] });
        }
        let src = self.data(table);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(AutodiffError::Index { index: id, bound: rows });
            }
            data.extend_from_slice(&src[id * cols..(id + 1) * cols]);
        }
        let out = Tensor::new(&[ids.len(), cols], data)?;
        Ok(self.record(
            out,
            &[table.index],
            Op::Gather {
                table: table.index,
                ids: ids.to_vec(),
                cols,
            },
        ))
    }

    /// Per-row normalization to zero mean and unit population variance,
    /// followed by `gamma * x̂ + beta`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
    ) -> Result<Var, AutodiffError> {
        self.check(x)?;
        self.check(gamma)?;
        self.check(beta)?;
        let sx = self.shape(x);
        let cols = match sx {
            &[_, c] => c,
            _ => return Err(shape_err("layer_norm", sx, self.shape(gamma))),
        };
        for p in [gamma, beta] {
            if self.shape(p) != [cols] {
                return Err(shape_err("layer_norm", sx, self.shape(p)));
            }
        }
        let (g, b) = (self.data(gamma), self.data(beta));
        let inv_n = T::one() / T::of(cols as f64);
        let mut out = self.data(x).to_vec();
        let rows = out.len() / cols;
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        for row in out.chunks_exact_mut(cols) {
            let mu = row.iter().fold(T::zero(), |a, &v| a + v) * inv_n;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mu) * (v - mu)) * inv_n;
            let r = T::one() / (var + eps).sqrt();
            for ((v, &g), &b) in row.iter_mut().zip(g).zip(b) {
                *v = (*v - mu) * r * g + b;
            }
            mean.push(mu);
            rstd.push(r);
        }
        let out = Tensor::new(self.shape(x), out)?;
        Ok(self.record(
            out,
            &[x.index, gamma.index, beta.index],
            Op::LayerNorm {
                x: x.index,
                gamma: gamma.index,
                beta: beta.index,
                cols,
                mean,
                rstd,
            },
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let src = self.data(x);
        let mut data = Vec::with_capacity(src.len());
        let mut tanh = Vec::with_capacity(src.len());
        for &v in src {
            let (y, t) = kernels::gelu(v);
            data.push(y);
            tanh.push(t);
        }
        let out = Tensor::new(self.shape(x), data)?;
        Ok(self.record(out, &[x.index], Op::Gelu { x: x.index, tanh }))
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// rescales survivors by `1/(1-rate)`. A zero rate is the identity.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut R,
    ) -> Result<Var, AutodiffError> {
        self.check(x)?;
        if rate <= 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.data(x).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(self.shape(x), data)?;
        Ok(self.record(out, &[x.index], Op::Dropout { x: x.index, mask }))
    }

    /// Multi-head causal self-attention over a packed `[batch·seq × 3d]`
    /// query/key/value projection. Returns the concatenated head outputs
    /// `[batch·seq × d]`.
    ///
    /// Scores are scaled by `1/sqrt(d/heads)`; future positions receive an
    /// additive −∞ before the softmax.
    pub fn causal_attention(
        &mut self,
        qkv: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    ) -> Result<Var, AutodiffError> {
        self.check(qkv)?;
        let s = self.shape(qkv);
        let (rows, width) = match s {
            &[r, w] => (r, w),
            _ => return Err(shape_err("causal_attention", s, &[batch, seq, heads])),
        };
        if heads == 0 || rows != batch * seq || width % (3 * heads) != 0 {
            return Err(shape_err("causal_attention", s, &[batch, seq, heads]));
        }
        let d = width / 3;
        let (out, probs) = attention_forward(self.data(qkv), batch, seq, heads, d);
        let out = Tensor::new(&[rows, d], out)?;
        Ok(self.record(
            out,
            &[qkv.index],
            Op::CausalAttention {
                qkv: qkv.index,
                batch,
                seq,
                heads,
                probs,
            },
        ))
    }

    /// Mean negative log-likelihood over rows whose target is `Some`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
    ) -> Result<Var, AutodiffError> {
        self.check(logits)?;
        let (rows, cols) = match self.shape(logits) {
            &[r, c] => (r, c),
            s => return Err(shape_err("softmax_cross_entropy", s, &[targets.len()])),
        };
        if rows != targets.len() {
            return Err(shape_err(
                "softmax_cross_entropy",
                self.shape(logits),
                &[targets.len()],
            ));
        }
        let active = targets.iter().flatten().count();
        if active == 0 {
            return Err(AutodiffError::EmptyLoss);
        }
        if let Some(&bad) = targets.iter().flatten().find(|&&t| t >= cols) {
            return Err(AutodiffError::Index {
                index: bad,
                bound: cols,
            });
        }
        let src = self.data(logits);
        let mut probs = vec![T::zero(); src.len()];
        let mut total = 0.0f64;
        for (r, target) in targets.iter().enumerate() {
            let Some(t) = *target else { continue };
            let row = &src[r * cols..(r + 1) * cols];
            let p = &mut probs[r * cols..(r + 1) * cols];
            p.copy_from_slice(row);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row
                .iter()
                .fold(T::zero(), |a, &v| a + (v - max).exp())
                .ln()
                + max;
            total += (lse - row[t]).as_f64();
            kernels::softmax_in_place(p);
        }
        let loss = Tensor::scalar(T::of(total / active as f64));
        Ok(self.record(
            loss,
            &[logits.index],
            Op::SoftmaxCrossEntropy {
                logits: logits.index,
                targets: targets.to_vec(),
                cols,
                probs,
                active,
            },
        ))
    }

    /// Propagates `d loss / d node` back to every differentiable leaf.
    ///
    /// Leaf gradients are added to any gradient already stored.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        self.check(loss)?;
        if self.nodes[loss.index].len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: self.nodes[loss.index].shape().to_vec(),
            });
        }
        self.backward_with(loss, &[T::one()])
    }

    /// Vector-Jacobian product: accumulates `seedᵀ · ∂output/∂leaf` into
    /// every leaf that requires a gradient.
    pub fn backward_with(&mut self, output: Var, seed: &[T]) -> Result<(), AutodiffError> {
        self.check(output)?;
        let loss = output;
        if seed.len() != self.nodes[loss.index].len() {
            return Err(AutodiffError::LengthMismatch {
                what: "backward seed",
                expected: self.nodes[loss.index].len(),
                actual: seed.len(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(seed.to_vec());

        let records = std::mem::take(&mut self.records);
        for rec in records.iter().rev() {
            if rec.output > loss.index {
                continue;
            }
            let Some(g) = grads[rec.output].take() else {
                continue;
            };
            self.backward_op(&rec.op, &g, &mut grads);
            // leaves never appear as record outputs, so nothing is lost here
        }
        self.records = records;

        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                if self.nodes[i].requires_grad() {
                    self.nodes[i].accumulate_grad(&g)?;
                }
            }
        }
        Ok(())
    }

    fn backward_op(&self, op: &Op<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let needs = &self.needs_grad;
        match op {
            &Op::Matmul { a, b, n, k, m } => {
                if needs[a] {
                    let ga = slot(grads, a, n * k);
                    kernels::gemm(n, m, k, g, Trans::No, nodes[b].data(), Trans::Yes, ga, true);
                }
                if needs[b] {
                    let gb = slot(grads, b, k * m);
                    kernels::gemm(k, n, m, nodes[a].data(), Trans::Yes, g, Trans::No, gb, true);
                }
            }
            &Op::Add { a, b } => {
                for i in [a, b] {
                    if needs[i] {
                        let gi = slot(grads, i, g.len());
                        gi.iter_mut().zip(g).for_each(|(x, &d)| *x += d);
                    }
                }
            }
            &Op::AddBias { x, bias, cols } => {
                if needs[x] {
                    let gx = slot(grads, x, g.len());
                    gx.iter_mut().zip(g).for_each(|(v, &d)| *v += d);
                }
                if needs[bias] {
                    let gb = slot(grads, bias, cols);
                    for row in g.chunks_exact(cols) {
                        gb.iter_mut().zip(row).for_each(|(v, &d)| *v += d);
                    }
                }
            }
            &Op::Scale { x, factor } => {
                if needs[x] {
                    let gx = slot(grads, x, g.len());
                    kernels::axpy(factor, g, gx);
                }
            }
            &Op::Sum { x } => {
                if needs[x] {
                    let gx = slot(grads, x, nodes[x].len());
                    gx.iter_mut().for_each(|v| *v += g[0]);
                }
            }
            Op::Gather { table, ids, cols } => {
                let (table, cols) = (*table, *cols);
                if needs[table] {
                    let gt = slot(grads, table, nodes[table].len());
                    for (row, &id) in g.chunks_exact(cols).zip(ids) {
                        kernels::axpy(T::one(), row, &mut gt[id * cols..(id + 1) * cols]);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cols,
                mean,
                rstd,
            } => {
                let (x, gamma, beta, cols) = (*x, *gamma, *beta, *cols);
                let xs = nodes[x].data();
                let gam = nodes[gamma].data();
                let inv_n = T::one() / T::of(cols as f64);
                let mut xhat = vec![T::zero(); cols];
                let mut gxhat = vec![T::zero(); cols];
                let mut ggamma = needs[gamma].then(|| vec![T::zero(); cols]);
                let mut gbeta = needs[beta].then(|| vec![T::zero(); cols]);
                let mut gx_all = needs[x].then(|| vec![T::zero(); xs.len()]);
                for (r, (xr, gr)) in xs.chunks_exact(cols).zip(g.chunks_exact(cols)).enumerate() {
                    let (mu, rs) = (mean[r], rstd[r]);
                    for j in 0..cols {
                        xhat[j] = (xr[j] - mu) * rs;
                        gxhat[j] = gr[j] * gam[j];
                    }
                    if let Some(gg) = &mut ggamma {
                        for j in 0..cols {
                            gg[j] += gr[j] * xhat[j];
                        }
                    }
                    if let Some(gb) = &mut gbeta {
                        kernels::axpy(T::one(), gr, gb);
                    }
                    if let Some(gx) = &mut gx_all {
                        let m1 = gxhat.iter().fold(T::zero(), |a, &v| a + v) * inv_n;
                        let m2 = kernels::dot(&gxhat, &xhat) * inv_n;
                        let out = &mut gx[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            out[j] = rs * (gxhat[j] - m1 - xhat[j] * m2);
                        }
                    }
                }
                for (idx, buf) in [(gamma, ggamma), (beta, gbeta), (x, gx_all)] {
                    if let Some(buf) = buf {
                        let dst = slot(grads, idx, buf.len());
                        kernels::axpy(T::one(), &buf, dst);
                    }
                }
            }
            Op::Gelu { x, tanh } => {
                let x = *x;
                if needs[x] {
                    let xs = nodes[x].data();
                    let gx = slot(grads, x, xs.len());
                    for i in 0..xs.len() {
                        gx[i] += g[i] * kernels::gelu_grad(xs[i], tanh[i]);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                if needs[x] {
                    let gx = slot(grads, x, g.len());
                    for i in 0..g.len() {
                        gx[i] += g[i] * mask[i];
                    }
                }
            }
            Op::CausalAttention {
                qkv,
                batch,
                seq,
                heads,
                probs,
            } => {
                let qkv = *qkv;
                if needs[qkv] {
                    let src = nodes[qkv].data();
                    let gq = slot(grads, qkv, src.len());
                    attention_backward(src, probs, g, gq, *batch, *seq, *heads);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                cols,
                probs,
                active,
            } => {
                let (logits, cols) = (*logits, *cols);
                if needs[logits] {
                    let scale = g[0] / T::of(*active as f64);
                    let gl = slot(grads, logits, nodes[logits].len());
                    for (r, target) in targets.iter().enumerate() {
                        let Some(t) = *target else { continue };
                        let p = &probs[r * cols..(r + 1) * cols];
                        let out = &mut gl[r * cols..(r + 1) * cols];
                        kernels::axpy(scale, p, out);
                        out[t] -= scale;
                    }
                }
            }
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], index: usize, len: usize) -> &mut [T] {
    grads[index].get_or_insert_with(|| vec![T::zero(); len])
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutodiffError {
    AutodiffError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Forward attention kernel. Returns `(output [rows×d], probs [batch·heads·seq·seq])`.
pub(crate) fn attention_forward<T: Scalar>(
    qkv: &[T],
    batch: usize,
    seq: usize,
    heads: usize,
    d: usize,
) -> (Vec<T>, Vec<T>) {
    let hd = d / heads;
    let width = 3 * d;
    let scale = T::one() / T::of(hd as f64).sqrt();
    let mut out = vec![T::zero(); batch * seq * d];
    let mut probs = vec![T::zero(); batch * heads * seq * seq];
    for b in 0..batch {
        let base = b * seq;
        for h in 0..heads {
            let p_base = (b * heads + h) * seq * seq;
            for i in 0..seq {
                let qrow = (base + i) * width + h * hd;
                let q = &qkv[qrow..qrow + hd];
                let row = &mut probs[p_base + i * seq..p_base + (i + 1) * seq];
                for (j, s) in row.iter_mut().enumerate() {
                    *s = if j <= i {
                        let krow = (base + j) * width + d + h * hd;
                        kernels::dot(q, &qkv[krow..krow + hd]) * scale
                    } else {
                        T::neg_infinity()
                    };
                }
                kernels::softmax_in_place(row);
                let orow = (base + i) * d + h * hd;
                let y = &mut out[orow..orow + hd];
                for (j, &p) in row[..=i].iter().enumerate() {
                    let vrow = (base + j) * width + 2 * d + h * hd;
                    kernels::axpy(p, &qkv[vrow..vrow + hd], y);
                }
            }
        }
    }
    (out, probs)
}

fn attention_backward<T: Scalar>(
    qkv: &[T],
    probs: &[T],
    g: &[T],
    gqkv: &mut [T],
    batch: usize,
    seq: usize,
    heads: usize,
) {
    let width = qkv.len() / (batch * seq);
    let d = width / 3;
    let hd = d / heads;
    let scale = T::one() / T::of(hd as f64).sqrt();
    let mut dp = vec![T::zero(); seq];
    for b in 0..batch {
        let base = b * seq;
        for h in 0..heads {
            let p_base = (b * heads + h) * seq * seq;
            for i in 0..seq {
                let p = &probs[p_base + i * seq..p_base + i * seq + i + 1];
                let grow = (base + i) * d + h * hd;
                let gy = &g[grow..grow + hd];
                let mut weighted = T::zero();
                for j in 0..=i {
                    let vrow = (base + j) * width + 2 * d + h * hd;
                    dp[j] = kernels::dot(gy, &qkv[vrow..vrow + hd]);
                    weighted += p[j] * dp[j];
                    kernels::axpy(p[j], gy, &mut gqkv[vrow..vrow + hd]);
                }
                let qrow = (base + i) * width + h * hd;
                for j in 0..=i {
                    let ds = p[j] * (dp[j] - weighted) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let krow = (base + j) * width + d + h * hd;
                    // query and key blocks of different rows never alias
                    let (lo, hi) = if qrow < krow {
                        let (lo, hi) = gqkv.split_at_mut(krow);
                        (&mut lo[qrow..qrow + hd], &mut hi[..hd])
                    } else {
                        let (lo, hi) = gqkv.split_at_mut(qrow);
                        (&mut hi[..hd], &mut lo[krow..krow + hd])
                    };
                    kernels::axpy(ds, &qkv[krow..krow + hd], lo);
                    kernels::axpy(ds, &qkv[qrow..qrow + hd], hi);
                }
            }
        }
    }
}
