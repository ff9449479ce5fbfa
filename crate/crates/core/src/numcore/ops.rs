//! Differentiable primitives as explicit forward/backward kernel pairs.
//!
//! Matrices are row-major `[rows, cols]`; a 1-D input to a matrix kernel is
//! treated as a single row. Affine weights are stored `[in, out]` so that
//! `y = x W + b`.

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// `c = op(a) * op(b) + beta * c` with row-major operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and strides describe exactly
    // the row-major layouts of those slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.expect_2d("matmul lhs")?;
    let (k2, n) = b.expect_2d("matmul rhs")?;
    if k != k2 {
        return dim_err(format!("matmul inner extents {k} vs {k2}"));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut out);
    Tensor::new(vec![m, n], out)
}

// ---------------------------------------------------------------- affine

pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, din) = x.expect_2d("affine input")?;
    let (win, dout) = w.expect_2d("affine weight")?;
    if din != win {
        return dim_err(format!("affine: input width {din} but weight is {win}x{dout}"));
    }
    if b.len() != dout {
        return dim_err(format!("affine: bias length {} but output width {dout}", b.len()));
    }
    let mut out = Vec::with_capacity(n * dout);
    for _ in 0..n {
        out.extend_from_slice(b.data());
    }
    gemm(n, din, dout, x.data(), false, w.data(), false, 1.0, &mut out);
    Tensor::new(vec![n, dout], out)
}

/// Returns `(dx, dw, db)`; `dx` has the shape of `x`.
pub fn affine_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    Ok((
        affine_backward_input(x, w, dy)?,
        affine_backward_weight(x, w, dy)?,
        affine_backward_bias(w, dy)?,
    ))
}

fn affine_dims(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, din) = x.expect_2d("affine input")?;
    let (_, dout) = w.expect_2d("affine weight")?;
    if dy.len() != n * dout {
        return dim_err("affine backward: upstream gradient shape");
    }
    Ok((n, din, dout))
}

pub fn affine_backward_input(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<Tensor> {
    let (n, din, dout) = affine_dims(x, w, dy)?;
    let mut dx = vec![0.0; n * din];
    gemm(n, dout, din, dy.data(), false, w.data(), true, 0.0, &mut dx);
    Tensor::new(x.shape().to_vec(), dx)
}

pub fn affine_backward_weight(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<Tensor> {
    let (n, din, dout) = affine_dims(x, w, dy)?;
    let mut dw = vec![0.0; din * dout];
    gemm(din, n, dout, x.data(), true, dy.data(), false, 0.0, &mut dw);
    Tensor::new(w.shape().to_vec(), dw)
}

pub fn affine_backward_bias(w: &Tensor, dy: &Tensor) -> Result<Tensor> {
    let (_, dout) = w.expect_2d("affine weight")?;
    let mut db = vec![0.0; dout];
    for row in dy.data().chunks(dout) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Tensor::new(vec![dout], db)
}

// ----------------------------------------------------------- activations

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Elu,
    Selu,
    Sigmoid,
    /// Row-wise along the last extent.
    LogSoftmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation_forward(x: &Tensor, kind: Activation) -> Result<Tensor> {
    x.ensure_finite("activation input")?;
    Ok(match kind {
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Elu => x.map(|v| if v > 0.0 { v } else { v.exp_m1() }),
        Activation::Selu => x.map(|v| {
            SELU_LAMBDA * if v > 0.0 { v } else { SELU_ALPHA * v.exp_m1() }
        }),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::LogSoftmax => {
            let c = x.cols();
            let mut out = x.clone();
            for row in out.data_mut().chunks_mut(c) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                for v in row.iter_mut() {
                    *v -= lse;
                }
            }
            out
        }
    })
}

/// `y` is the forward output for `x`.
pub fn activation_backward(x: &Tensor, y: &Tensor, dy: &Tensor, kind: Activation) -> Result<Tensor> {
    if dy.len() != x.len() {
        return dim_err("activation backward: upstream gradient shape");
    }
    let mut dx = dy.clone();
    let d = dx.data_mut();
    match kind {
        Activation::Relu => {
            for (g, &v) in d.iter_mut().zip(x.data()) {
                if v <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Elu => {
            for (g, &v) in d.iter_mut().zip(x.data()) {
                if v <= 0.0 {
                    *g *= v.exp();
                }
            }
        }
        Activation::Selu => {
            for (g, &v) in d.iter_mut().zip(x.data()) {
                *g *= SELU_LAMBDA * if v > 0.0 { 1.0 } else { SELU_ALPHA * v.exp() };
            }
        }
        Activation::Sigmoid => {
            for (g, &s) in d.iter_mut().zip(y.data()) {
                *g *= s * (1.0 - s);
            }
        }
        Activation::LogSoftmax => {
            let c = x.cols();
            for (grow, yrow) in d.chunks_mut(c).zip(y.data().chunks(c)) {
                let total: f64 = grow.iter().sum();
                for (g, &ly) in grow.iter_mut().zip(yrow) {
                    *g -= ly.exp() * total;
                }
            }
        }
    }
    Ok(dx)
}

// --------------------------------------------------------------- dropout

/// Per-element multiplier and offset applied by a dropout draw:
/// `y = scale * x + shift`.
#[derive(Clone, Debug)]
pub struct DropoutDraw {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability {p} not in [0, 1)")));
    }
    Ok(())
}

/// Alpha dropout: dropped units are set to the SELU negative saturation value
/// `-lambda * alpha`, then an affine correction restores zero mean and unit
/// variance in expectation.
pub fn alpha_dropout(x: &Tensor, p: f64, rng: &mut Rng, training: bool) -> Result<(Tensor, Option<DropoutDraw>)> {
    check_p(p)?;
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let alpha_p = -SELU_LAMBDA * SELU_ALPHA;
    let q = 1.0 - p;
    let a = (q + alpha_p * alpha_p * q * p).powf(-0.5);
    let b = -a * alpha_p * p;
    let mut scale = Vec::with_capacity(x.len());
    let mut shift = Vec::with_capacity(x.len());
    for _ in 0..x.len() {
        if rng.bernoulli(q) {
            scale.push(a);
            shift.push(b);
        } else {
            scale.push(0.0);
            shift.push(a * alpha_p + b);
        }
    }
    let draw = DropoutDraw { scale, shift };
    Ok((apply_draw(x, &draw), Some(draw)))
}

/// Inverted dropout (kept units scaled by `1 / (1 - p)`).
pub fn dropout(x: &Tensor, p: f64, rng: &mut Rng, training: bool) -> Result<(Tensor, Option<DropoutDraw>)> {
    check_p(p)?;
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.bernoulli(1.0 - p) { keep } else { 0.0 })
        .collect();
    let draw = DropoutDraw {
        shift: vec![0.0; x.len()],
        scale,
    };
    Ok((apply_draw(x, &draw), Some(draw)))
}

pub fn apply_draw(x: &Tensor, draw: &DropoutDraw) -> Tensor {
    let mut y = x.clone();
    for ((v, s), t) in y.data_mut().iter_mut().zip(&draw.scale).zip(&draw.shift) {
        *v = *v * s + t;
    }
    y
}

// ------------------------------------------------------------ graph ops

/// Elementwise max over each node's neighbours. Nodes without neighbours
/// aggregate the zero vector. Returns the aggregate and the arg-max source row
/// per entry (`usize::MAX` where the neighbourhood is empty).
pub fn neighbor_max_forward(m: &Tensor, neighbors: &[Vec<usize>]) -> Result<(Tensor, Vec<usize>)> {
    let (n, f) = m.expect_2d("neighbour max input")?;
    if neighbors.len() != n {
        return dim_err(format!("{} neighbour lists for {n} nodes", neighbors.len()));
    }
    let mut out = vec![0.0; n * f];
    let mut arg = vec![usize::MAX; n * f];
    for (v, nb) in neighbors.iter().enumerate() {
        for &u in nb {
            if u >= n {
                return dim_err(format!("neighbour index {u} out of range for {n} nodes"));
            }
            let src = m.row_slice(u);
            for c in 0..f {
                let slot = v * f + c;
                if arg[slot] == usize::MAX || src[c] > out[slot] {
                    out[slot] = src[c];
                    arg[slot] = u;
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, f], out)?, arg))
}

pub fn neighbor_max_backward(shape: &[usize], arg: &[usize], dy: &Tensor) -> Result<Tensor> {
    let f = *shape.last().unwrap_or(&1);
    let mut dm = Tensor::zeros(shape);
    let d = dm.data_mut();
    for (slot, &u) in arg.iter().enumerate() {
        if u != usize::MAX {
            d[u * f + slot % f] += dy.data()[slot];
        }
    }
    Ok(dm)
}

// ------------------------------------------------------------- kronecker

/// Batched one-appended outer product. Each input is `[B, d_i]`; the output is
/// `[B, prod(d_i + 1)]` flattened row-major with the first input's index
/// varying slowest. The appended one sits at the last position of each axis.
pub fn kron_forward(inputs: &[&Tensor]) -> Result<Tensor> {
    let (b, extents) = kron_extents(inputs)?;
    let total: usize = extents.iter().product();
    let mut out = vec![0.0; b * total];
    let mut buf: Vec<f64> = Vec::with_capacity(total);
    for r in 0..b {
        buf.clear();
        buf.push(1.0);
        for (t, &ext) in inputs.iter().zip(&extents) {
            let row = t.row_slice(r);
            let mut next = Vec::with_capacity(buf.len() * ext);
            for &p in &buf {
                next.extend(row.iter().map(|&v| p * v));
                next.push(p);
            }
            buf = next;
        }
        out[r * total..(r + 1) * total].copy_from_slice(&buf);
    }
    Tensor::new(vec![b, total], out)
}

pub fn kron_extents(inputs: &[&Tensor]) -> Result<(usize, Vec<usize>)> {
    if inputs.is_empty() {
        return dim_err("kron needs at least one input");
    }
    let b = inputs[0].rows();
    let mut extents = Vec::with_capacity(inputs.len());
    for t in inputs {
        let (r, c) = t.expect_2d("kron input")?;
        if r != b {
            return dim_err(format!("kron batch sizes differ: {b} vs {r}"));
        }
        extents.push(c + 1);
    }
    Ok((b, extents))
}

/// Gradients of the one-appended outer product with respect to each input
/// (the appended constant receives no gradient).
pub fn kron_backward(inputs: &[&Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
    let (b, extents) = kron_extents(inputs)?;
    let total: usize = extents.iter().product();
    if dy.len() != b * total {
        return dim_err("kron backward: upstream gradient shape");
    }
    let m = inputs.len();
    let mut strides = vec![1usize; m];
    for i in (0..m.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * extents[i + 1];
    }
    let mut grads: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut idx = vec![0usize; m];
    for r in 0..b {
        let rows: Vec<&[f64]> = inputs.iter().map(|t| t.row_slice(r)).collect();
        let value = |i: usize, k: usize| if k == extents[i] - 1 { 1.0 } else { rows[i][k] };
        let g_row = &dy.data()[r * total..(r + 1) * total];
        for (flat, &g) in g_row.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for i in 0..m {
                idx[i] = (flat / strides[i]) % extents[i];
            }
            for i in 0..m {
                if idx[i] == extents[i] - 1 {
                    continue;
                }
                let mut prod = g;
                for j in 0..m {
                    if j != i {
                        prod *= value(j, idx[j]);
                    }
                }
                let cols = extents[i] - 1;
                grads[i].data_mut()[r * cols + idx[i]] += prod;
            }
        }
    }
    Ok(grads)
}

// ----------------------------------------------------------- convolution

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.height + 2 * self.pad - self.kernel) / self.stride + 1,
            (self.width + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn from(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        let [c, h, wd] = x.shape() else {
            return dim_err(format!("conv input must be [C,H,W], got {:?}", x.shape()));
        };
        let [o, c2, k, k2] = w.shape() else {
            return dim_err(format!("conv weight must be [O,C,k,k], got {:?}", w.shape()));
        };
        if c != c2 || k != k2 {
            return dim_err(format!("conv weight {:?} incompatible with input {:?}", w.shape(), x.shape()));
        }
        if stride == 0 || h + 2 * pad < *k || wd + 2 * pad < *k {
            return dim_err("conv kernel larger than padded input or zero stride");
        }
        Ok(Self {
            in_channels: *c,
            height: *h,
            width: *wd,
            out_channels: *o,
            kernel: *k,
            stride,
            pad,
        })
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (ho, wo) = self.out_hw();
        let k = self.kernel;
        let rows = self.in_channels * k * k;
        let mut cols = vec![0.0; rows * ho * wo];
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    for oi in 0..ho {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= self.height as isize {
                            continue;
                        }
                        for oj in 0..wo {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj < 0 || jj >= self.width as isize {
                                continue;
                            }
                            cols[row * ho * wo + oi * wo + oj] =
                                x[(c * self.height + ii as usize) * self.width + jj as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let (ho, wo) = self.out_hw();
        let k = self.kernel;
        let mut x = vec![0.0; self.in_channels * self.height * self.width];
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    for oi in 0..ho {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= self.height as isize {
                            continue;
                        }
                        for oj in 0..wo {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj < 0 || jj >= self.width as isize {
                                continue;
                            }
                            x[(c * self.height + ii as usize) * self.width + jj as usize] +=
                                cols[row * ho * wo + oi * wo + oj];
                        }
                    }
                }
            }
        }
        x
    }
}

/// 2-D convolution of a single `[C,H,W]` image with `[O,C,k,k]` filters.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = ConvGeometry::from(x, w, stride, pad)?;
    if b.len() != g.out_channels {
        return dim_err("conv bias length");
    }
    let (ho, wo) = g.out_hw();
    let cols = g.im2col(x.data());
    let ckk = g.in_channels * g.kernel * g.kernel;
    let mut out = Vec::with_capacity(g.out_channels * ho * wo);
    for &bias in b.data() {
        out.extend(std::iter::repeat_n(bias, ho * wo));
    }
    gemm(g.out_channels, ckk, ho * wo, w.data(), false, &cols, false, 1.0, &mut out);
    Tensor::new(vec![g.out_channels, ho, wo], out)
}

/// Returns `(dx, dw, db)`.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = ConvGeometry::from(x, w, stride, pad)?;
    let (ho, wo) = g.out_hw();
    let hw = ho * wo;
    if dy.len() != g.out_channels * hw {
        return dim_err("conv backward: upstream gradient shape");
    }
    let ckk = g.in_channels * g.kernel * g.kernel;
    let cols = g.im2col(x.data());
    let mut dw = vec![0.0; g.out_channels * ckk];
    gemm(g.out_channels, hw, ckk, dy.data(), false, &cols, true, 0.0, &mut dw);
    let mut dcols = vec![0.0; ckk * hw];
    gemm(ckk, g.out_channels, hw, w.data(), true, dy.data(), false, 0.0, &mut dcols);
    let dx = g.col2im(&dcols);
    let db: Vec<f64> = dy.data().chunks(hw).map(|c| c.iter().sum()).collect();
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        Tensor::new(vec![g.out_channels], db)?,
    ))
}

/// Non-overlapping `size x size` max pooling of a `[C,H,W]` map (trailing
/// rows/columns that do not fill a window are dropped).
pub fn max_pool2d_forward(x: &Tensor, size: usize) -> Result<(Tensor, Vec<usize>)> {
    let [c, h, w] = x.shape() else {
        return dim_err(format!("max pool input must be [C,H,W], got {:?}", x.shape()));
    };
    let (c, h, w) = (*c, *h, *w);
    if size == 0 || h < size || w < size {
        return dim_err("pool window larger than input");
    }
    let (ho, wo) = (h / size, w / size);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oi in 0..ho {
            for oj in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for di in 0..size {
                    for dj in 0..size {
                        let idx = (ch * h + oi * size + di) * w + oj * size + dj;
                        if x.data()[idx] > best {
                            best = x.data()[idx];
                            best_i = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    Ok((Tensor::new(vec![c, ho, wo], out)?, arg))
}

pub fn max_pool2d_backward(shape: &[usize], arg: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(shape);
    for (&i, &g) in arg.iter().zip(dy.data()) {
        dx.data_mut()[i] += g;
    }
    dx
}

// ---------------------------------------------------------------- losses

/// Mean negative log-likelihood of `labels` under row-wise log-probabilities.
pub fn nll_forward(logp: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, c) = logp.expect_2d("nll input")?;
    if labels.len() != n {
        return dim_err(format!("{} labels for {n} rows", labels.len()));
    }
    let mut total = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        if l >= c {
            return Err(Error::Parameter(format!("label {l} out of range for {c} classes")));
        }
        total -= logp.at2(r, l);
    }
    Ok(total / n as f64)
}

pub fn nll_backward(shape: &[usize], labels: &[usize], upstream: f64) -> Tensor {
    let mut d = Tensor::zeros(shape);
    let c = *shape.last().unwrap_or(&1);
    let n = labels.len() as f64;
    for (r, &l) in labels.iter().enumerate() {
        d.data_mut()[r * c + l] = -upstream / n;
    }
    d
}
