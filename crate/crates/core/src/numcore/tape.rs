//! Recording of primitive kernel applications for reverse-mode gradients.
//!
//! The op set is closed: every node is one of the kernels in
//! [`ops`](super::ops) (or a cheap shape/arith op), and its backward is the
//! matching explicit backward kernel.

use std::collections::HashMap;

use super::ops::{self, Activation};
use super::params::ParamStore;
use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};
use crate::evalstats::cox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param,
    Affine { x: Var, w: Var, b: Var },
    Act { x: Var, kind: Activation },
    Dropout { x: Var, scale: Vec<f64> },
    Add(Var, Var),
    Mul(Var, Var),
    ScaleShift { x: Var, scale: f64 },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, idx: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ScaleRows { x: Var, s: Var },
    MeanRows(Var),
    SumAll(Var),
    NeighborMax { m: Var, arg: Vec<usize> },
    Kron(Vec<Var>),
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    MaxPool { x: Var, arg: Vec<usize> },
    Reshape(Var),
    Cox { scores: Var, grad: Vec<f64> },
    Nll { logp: Var, labels: Vec<usize> },
    L1(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single forward pass. Values are computed eagerly as ops are recorded.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

/// Gradients of one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of its shape if nothing flowed into it.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }

    /// Adds parameter gradients into the store's gradient buffers.
    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParamStore) -> Result<()> {
        for (name, &v) in &tape.params {
            if let Some(g) = self.get(v) {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is wanted (attribution, gradient checks).
    pub fn input_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Parameter leaf, shared across uses within this tape. Frozen parameters
    /// are recorded as constants.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let entry = store
            .entry(name)
            .ok_or_else(|| Error::Lookup(format!("parameter `{name}`")))?;
        let v = self.push(entry.value.clone(), Op::Param, entry.trainable);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::affine_forward(self.value(x), self.value(w), self.value(b))?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(y, Op::Affine { x, w, b }, ng))
    }

    /// Affine map with parameters `{prefix}.weight` and `{prefix}.bias`.
    pub fn linear(&mut self, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
        let w = self.param(store, &format!("{prefix}.weight"))?;
        let b = self.param(store, &format!("{prefix}.bias"))?;
        self.affine(x, w, b)
    }

    pub fn act(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let y = ops::activation_forward(self.value(x), kind)?;
        let ng = self.ng(x);
        Ok(self.push(y, Op::Act { x, kind }, ng))
    }

    pub fn alpha_dropout(&mut self, x: Var, p: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        let (y, draw) = ops::alpha_dropout(self.value(x), p, rng, training)?;
        Ok(self.record_dropout(x, y, draw))
    }

    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        let (y, draw) = ops::dropout(self.value(x), p, rng, training)?;
        Ok(self.record_dropout(x, y, draw))
    }

    fn record_dropout(&mut self, x: Var, y: Tensor, draw: Option<ops::DropoutDraw>) -> Var {
        match draw {
            None => x,
            Some(d) => {
                let ng = self.ng(x);
                self.push(y, Op::Dropout { x, scale: d.scale }, ng)
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, Op::Add(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(y, Op::Mul(a, b), ng))
    }

    /// `scale * x + shift`.
    pub fn scale_shift(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let y = self.value(x).map(|v| scale * v + shift);
        let ng = self.ng(x);
        self.push(y, Op::ScaleShift { x, scale }, ng)
    }

    /// Concatenates matrices with equal row counts along the last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return dim_err("concat of nothing");
        };
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).expect_2d("concat part")?;
            if r != rows {
                return dim_err(format!("concat row counts differ: {rows} vs {r}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(vec![rows, total], out)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Stacks matrices with equal widths along the first axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return dim_err("stack of nothing");
        };
        let cols = self.value(first).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.value(p).expect_2d("stack part")?;
            if c != cols {
                return dim_err(format!("stack widths differ: {cols} vs {c}"));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(vec![rows, cols], out)?, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (n, c) = self.value(x).expect_2d("gather input")?;
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= n {
                return dim_err(format!("row {i} out of range for {n} rows"));
            }
            out.extend_from_slice(self.value(x).row_slice(i));
        }
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::new(vec![idx.len(), c], out)?,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            ng,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, c) = self.value(x).expect_2d("slice input")?;
        if start + len > c || len == 0 {
            return dim_err(format!("column slice {start}..{} of width {c}", start + len));
        }
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&self.value(x).row_slice(r)[start..start + len]);
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::new(vec![n, len], out)?, Op::SliceCols { x, start }, ng))
    }

    /// Multiplies row `i` of `x` by `s[i]` (`s` is `[N, 1]` or `[N]`).
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (n, c) = self.value(x).expect_2d("scale_rows input")?;
        if self.value(s).len() != n {
            return dim_err("scale_rows: one scale per row required");
        }
        let mut y = self.value(x).clone();
        let sv = self.value(s).data().to_vec();
        for r in 0..n {
            for v in &mut y.data_mut()[r * c..(r + 1) * c] {
                *v *= sv[r];
            }
        }
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(y, Op::ScaleRows { x, s }, ng))
    }

    /// Column means, `[N, C] -> [1, C]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (n, c) = self.value(x).expect_2d("mean_rows input")?;
        let mut out = vec![0.0; c];
        for r in 0..n {
            for (acc, v) in out.iter_mut().zip(self.value(x).row_slice(r)) {
                *acc += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        let ng = self.ng(x);
        Ok(self.push(Tensor::row(out), Op::MeanRows(x), ng))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), ng)
    }

    pub fn neighbor_max(&mut self, m: Var, neighbors: &[Vec<usize>]) -> Result<Var> {
        let (y, arg) = ops::neighbor_max_forward(self.value(m), neighbors)?;
        let ng = self.ng(m);
        Ok(self.push(y, Op::NeighborMax { m, arg }, ng))
    }

    pub fn kron(&mut self, parts: &[Var]) -> Result<Var> {
        let ts: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let y = ops::kron_forward(&ts)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(y, Op::Kron(parts.to_vec()), ng))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = ops::conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(y, Op::Conv2d { x, w, b, stride, pad }, ng))
    }

    pub fn max_pool2d(&mut self, x: Var, size: usize) -> Result<Var> {
        let (y, arg) = ops::max_pool2d_forward(self.value(x), size)?;
        let ng = self.ng(x);
        Ok(self.push(y, Op::MaxPool { x, arg }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        let ng = self.ng(x);
        Ok(self.push(y, Op::Reshape(x), ng))
    }

    /// Cox negative partial log-likelihood of one score per row, divided by
    /// `normalizer` (e.g. the number of events in the batch).
    pub fn cox_loss(&mut self, scores: Var, times: &[f64], events: &[bool], normalizer: f64) -> Result<Var> {
        let s = self.value(scores);
        if s.len() != times.len() {
            return dim_err(format!("{} scores for {} patients", s.len(), times.len()));
        }
        let (loss, grad) = cox::cox_loss_grad(s.data(), times, events)?;
        let grad = grad.into_iter().map(|g| g / normalizer).collect();
        let ng = self.ng(scores);
        Ok(self.push(Tensor::scalar(loss / normalizer), Op::Cox { scores, grad }, ng))
    }

    pub fn nll_loss(&mut self, logp: Var, labels: &[usize]) -> Result<Var> {
        let l = ops::nll_forward(self.value(logp), labels)?;
        let ng = self.ng(logp);
        Ok(self.push(
            Tensor::scalar(l),
            Op::Nll {
                logp,
                labels: labels.to_vec(),
            },
            ng,
        ))
    }

    /// Sum of absolute values.
    pub fn l1(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v.abs()).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::L1(x), ng)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.value(out).len() != 1 {
            return dim_err(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(out).shape()
            ));
        }
        self.backward_with(out, Tensor::full(self.value(out).shape(), 1.0))
    }

    /// Reverse sweep seeded with an explicit upstream gradient for `out`.
    pub fn backward_with(&self, out: Var, seed: Tensor) -> Result<Gradients> {
        if seed.len() != self.value(out).len() {
            return dim_err("backward seed shape");
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed.reshape(self.value(out).shape())?);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &dy, &mut grads)?;
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
        if !self.ng(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g)?,
            slot @ None => *slot = Some(g.reshape(self.value(v).shape())?),
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if self.ng(*x) {
                    self.accum(grads, *x, ops::affine_backward_input(xv, wv, dy)?)?;
                }
                if self.ng(*w) {
                    self.accum(grads, *w, ops::affine_backward_weight(xv, wv, dy)?)?;
                }
                if self.ng(*b) {
                    self.accum(grads, *b, ops::affine_backward_bias(wv, dy)?)?;
                }
            }
            Op::Act { x, kind } => {
                let g = ops::activation_backward(self.value(*x), &node.value, dy, *kind)?;
                self.accum(grads, *x, g)?;
            }
            Op::Dropout { x, scale } => {
                let mut g = dy.clone();
                g.data_mut().iter_mut().zip(scale).for_each(|(v, s)| *v *= s);
                self.accum(grads, *x, g)?;
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, dy.clone())?;
                self.accum(grads, *b, dy.clone())?;
            }
            Op::Mul(a, b) => {
                let ga = dy.zip_map(self.value(*b), |g, v| g * v)?;
                let gb = dy.zip_map(self.value(*a), |g, v| g * v)?;
                self.accum(grads, *a, ga)?;
                self.accum(grads, *b, gb)?;
            }
            Op::ScaleShift { x, scale } => {
                self.accum(grads, *x, dy.scale(*scale))?;
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.ng(p) {
                        let mut g = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            g.extend_from_slice(&dy.data()[r * total + offset..r * total + offset + c]);
                        }
                        self.accum(grads, p, Tensor::new(vec![rows, c], g)?)?;
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.ng(p) {
                        let g = dy.data()[offset..offset + n].to_vec();
                        self.accum(grads, p, Tensor::new(self.value(p).shape().to_vec(), g)?)?;
                    }
                    offset += n;
                }
            }
            Op::GatherRows { x, idx } => {
                let mut g = Tensor::zeros(self.value(*x).shape());
                let c = node.value.cols();
                for (k, &r) in idx.iter().enumerate() {
                    let src = &dy.data()[k * c..(k + 1) * c];
                    for (a, b) in g.row_slice_mut(r).iter_mut().zip(src) {
                        *a += b;
                    }
                }
                self.accum(grads, *x, g)?;
            }
            Op::SliceCols { x, start } => {
                let mut g = Tensor::zeros(self.value(*x).shape());
                let len = node.value.cols();
                for r in 0..node.value.rows() {
                    g.row_slice_mut(r)[*start..start + len].copy_from_slice(&dy.data()[r * len..(r + 1) * len]);
                }
                self.accum(grads, *x, g)?;
            }
            Op::ScaleRows { x, s } => {
                let xv = self.value(*x);
                let sv = self.value(*s);
                let c = xv.cols();
                if self.ng(*x) {
                    let mut g = dy.clone();
                    for (r, row) in g.data_mut().chunks_mut(c).enumerate() {
                        row.iter_mut().for_each(|v| *v *= sv.data()[r]);
                    }
                    self.accum(grads, *x, g)?;
                }
                if self.ng(*s) {
                    let gs: Vec<f64> = (0..xv.rows())
                        .map(|r| {
                            xv.row_slice(r)
                                .iter()
                                .zip(&dy.data()[r * c..(r + 1) * c])
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    self.accum(grads, *s, Tensor::new(sv.shape().to_vec(), gs)?)?;
                }
            }
            Op::MeanRows(x) => {
                let (n, c) = self.value(*x).expect_2d("mean_rows")?;
                let mut g = Vec::with_capacity(n * c);
                for _ in 0..n {
                    g.extend(dy.data().iter().map(|v| v / n as f64));
                }
                self.accum(grads, *x, Tensor::new(vec![n, c], g)?)?;
            }
            Op::SumAll(x) => {
                let g = Tensor::full(self.value(*x).shape(), dy.data()[0]);
                self.accum(grads, *x, g)?;
            }
            Op::NeighborMax { m, arg } => {
                let g = ops::neighbor_max_backward(self.value(*m).shape(), arg, dy)?;
                self.accum(grads, *m, g)?;
            }
            Op::Kron(parts) => {
                let ts: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
                let gs = ops::kron_backward(&ts, dy)?;
                for (&p, g) in parts.iter().zip(gs) {
                    self.accum(grads, p, g)?;
                }
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (dx, dw, db) = ops::conv2d_backward(self.value(*x), self.value(*w), dy, *stride, *pad)?;
                self.accum(grads, *x, dx)?;
                self.accum(grads, *w, dw)?;
                self.accum(grads, *b, db)?;
            }
            Op::MaxPool { x, arg } => {
                let g = ops::max_pool2d_backward(self.value(*x).shape(), arg, dy);
                self.accum(grads, *x, g)?;
            }
            Op::Reshape(x) => {
                let g = dy.clone().reshape(self.value(*x).shape())?;
                self.accum(grads, *x, g)?;
            }
            Op::Cox { scores, grad } => {
                let up = dy.data()[0];
                let g = Tensor::new(
                    self.value(*scores).shape().to_vec(),
                    grad.iter().map(|v| v * up).collect(),
                )?;
                self.accum(grads, *scores, g)?;
            }
            Op::Nll { logp, labels } => {
                let g = ops::nll_backward(self.value(*logp).shape(), labels, dy.data()[0]);
                self.accum(grads, *logp, g)?;
            }
            Op::L1(x) => {
                let up = dy.data()[0];
                let g = self.value(*x).map(|v| {
                    if v > 0.0 {
                        up
                    } else if v < 0.0 {
                        -up
                    } else {
                        0.0
                    }
                });
                self.accum(grads, *x, g)?;
            }
        }
        Ok(())
    }
}
