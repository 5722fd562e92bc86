//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] owns every value produced while it is active. Leaves enter via
//! [`Tape::leaf`]; each primitive appends a node whose inputs are strictly
//! earlier on the tape, so the node order is already a topological order and
//! [`Tape::backward`] is one reverse sweep. An operation whose inputs are all
//! constants is evaluated but not recorded: its node becomes a constant and
//! keeps no backward state.
//!
//! Leaf gradients accumulate across backward calls until
//! [`Tape::zero_grad`]; intermediate gradients live only for the duration of
//! one sweep.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(1);

/// Handle to a value on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    Conv2d {
        x: usize,
        k: usize,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        x: usize,
        k: usize,
        geom: ConvGeom,
    },
    AddChannel {
        x: usize,
        v: usize,
    },
    Silu(usize),
    LogSigmoid(usize),
    AvgPool2d {
        x: usize,
        window: usize,
    },
    Linear {
        x: usize,
        w: usize,
        b: usize,
    },
    Mse(usize, usize),
    Sum(usize),
    Scale(usize, f64),
    Reshape(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], idx: usize, len: usize) -> &'a mut [f64] {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape == self.id && v.index < self.nodes.len() {
            Ok(v.index)
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        Ok(&self.nodes[self.idx(v)?])
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        let op = if needs_grad { op } else { Op::Leaf };
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    /// Adds a leaf; it is differentiated iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        finite("leaf", t.data())?;
        let needs_grad = t.requires_grad();
        let mut value = t;
        value.zero_grad();
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Ok(Var {
            tape: self.id,
            index,
        })
    }

    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t.with_requires_grad(false))
    }

    /// # Panics
    /// If `v` was produced by another tape.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).expect("variable from another tape").value
    }

    /// Accumulated gradient of a differentiated leaf, if any backward pass
    /// has reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).ok().and_then(|n| n.value.grad())
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).map(|n| n.needs_grad).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of operations that carry backward state.
    pub fn recorded_ops(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Leaf))
            .count()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        finite("add", &data)?;
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(out, Op::Add(ia, ib), &[ia, ib]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        finite("mul", &data)?;
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(out, Op::Mul(ia, ib), &[ia, ib]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    /// `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut data = vec![0.0; m * n];
        kernels::gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut data);
        finite("matmul", &data)?;
        let out = Tensor::from_parts(vec![m, n], data);
        Ok(self.push(out, Op::MatMul(ia, ib), &[ia, ib]))
    }

    /// Cross-correlation of `x: [N,C,H,W]` with `kernel: [O,C,kh,kw]`,
    /// zero padding on every side.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (ix, ik) = (self.idx(x)?, self.idx(kernel)?);
        let (tx, tk) = (&self.nodes[ix].value, &self.nodes[ik].value);
        if tx.rank() != 4 || tk.rank() != 4 || tx.shape()[1] != tk.shape()[1] {
            return Err(shape_err("conv2d", tx, tk));
        }
        let (n, c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
        let (o, kh, kw) = (tk.shape()[0], tk.shape()[2], tk.shape()[3]);
        let geom = ConvGeom::new(c, h, w, kh, kw, stride, padding)
            .ok_or_else(|| shape_err("conv2d", tx, tk))?;
        let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
        let mut cols = vec![0.0; rows * cols_n];
        let mut data = vec![0.0; n * o * cols_n];
        for (img, out) in tx
            .data()
            .chunks_exact(c * h * w)
            .zip(data.chunks_exact_mut(o * cols_n))
        {
            kernels::im2col(img, &geom, &mut cols);
            kernels::gemm(o, rows, cols_n, tk.data(), false, &cols, false, 0.0, out);
        }
        finite("conv2d", &data)?;
        let out = Tensor::from_parts(vec![n, o, geom.out_h, geom.out_w], data);
        Ok(self.push(out, Op::Conv2d { x: ix, k: ik, geom }, &[ix, ik]))
    }

    /// Transposed convolution (the adjoint of [`Tape::conv2d`]) of
    /// `x: [N,C,H,W]` with `kernel: [C,O,kh,kw]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (ix, ik) = (self.idx(x)?, self.idx(kernel)?);
        let (tx, tk) = (&self.nodes[ix].value, &self.nodes[ik].value);
        if tx.rank() != 4 || tk.rank() != 4 || tx.shape()[1] != tk.shape()[0] || stride == 0 {
            return Err(shape_err("conv_transpose2d", tx, tk));
        }
        let (n, c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
        let (o, kh, kw) = (tk.shape()[1], tk.shape()[2], tk.shape()[3]);
        let out_h = ((h - 1) * stride + kh).checked_sub(2 * padding);
        let out_w = ((w - 1) * stride + kw).checked_sub(2 * padding);
        let geom = match (out_h, out_w) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => {
                ConvGeom::new(o, oh, ow, kh, kw, stride, padding)
            }
            _ => None,
        }
        .filter(|g| g.out_h == h && g.out_w == w)
        .ok_or_else(|| shape_err("conv_transpose2d", tx, tk))?;
        let (rows, hw) = (geom.col_rows(), h * w);
        let plane = geom.height * geom.width;
        let mut cols = vec![0.0; rows * hw];
        let mut data = vec![0.0; n * o * plane];
        for (img, out) in tx
            .data()
            .chunks_exact(c * hw)
            .zip(data.chunks_exact_mut(o * plane))
        {
            kernels::gemm(rows, c, hw, tk.data(), true, img, false, 0.0, &mut cols);
            kernels::col2im(&cols, &geom, out);
        }
        finite("conv_transpose2d", &data)?;
        let out = Tensor::from_parts(vec![n, o, geom.height, geom.width], data);
        Ok(self.push(out, Op::ConvTranspose2d { x: ix, k: ik, geom }, &[ix, ik]))
    }

    /// Adds a per-channel vector to a `[N,C,H,W]` map. `v` is either `[C]`
    /// (shared across the batch) or `[N,C]`.
    pub fn add_channel(&mut self, x: Var, v: Var) -> Result<Var> {
        let (ix, iv) = (self.idx(x)?, self.idx(v)?);
        let (tx, tv) = (&self.nodes[ix].value, &self.nodes[iv].value);
        if tx.rank() != 4 {
            return Err(shape_err("add_channel", tx, tv));
        }
        let (n, c) = (tx.shape()[0], tx.shape()[1]);
        let shared = tv.shape() == [c];
        if !shared && tv.shape() != [n, c] {
            return Err(shape_err("add_channel", tx, tv));
        }
        let hw = tx.shape()[2] * tx.shape()[3];
        let mut data = tx.data().to_vec();
        for (i, plane) in data.chunks_exact_mut(hw).enumerate() {
            let off = if shared { tv.data()[i % c] } else { tv.data()[i] };
            plane.iter_mut().for_each(|p| *p += off);
        }
        finite("add_channel", &data)?;
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        Ok(self.push(out, Op::AddChannel { x: ix, v: iv }, &[ix, iv]))
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let tx = &self.nodes[ix].value;
        let out = tx.map(|v| v * kernels::sigmoid(v));
        finite("silu", out.data())?;
        Ok(self.push(out, Op::Silu(ix), &[ix]))
    }

    pub fn log_sigmoid(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.nodes[ix].value.map(kernels::log_sigmoid);
        finite("log_sigmoid", out.data())?;
        Ok(self.push(out, Op::LogSigmoid(ix), &[ix]))
    }

    /// Non-overlapping `window × window` mean pooling of `[N,C,H,W]`.
    pub fn avg_pool2d(&mut self, x: Var, window: usize) -> Result<Var> {
        let ix = self.idx(x)?;
        let tx = &self.nodes[ix].value;
        let s = tx.shape();
        if s.len() != 4 || window == 0 || s[2] % window != 0 || s[3] % window != 0 {
            return Err(TensorError::InvalidShape {
                op: "avg_pool2d",
                shape: s.to_vec(),
                reason: format!("window {window} must tile the spatial extent"),
            });
        }
        let (h, w) = (s[2], s[3]);
        let (oh, ow) = (h / window, w / window);
        let norm = 1.0 / (window * window) as f64;
        let mut data = vec![0.0; s[0] * s[1] * oh * ow];
        for (plane, out) in tx.data().chunks_exact(h * w).zip(data.chunks_exact_mut(oh * ow)) {
            for y in 0..h {
                for x in 0..w {
                    out[(y / window) * ow + x / window] += plane[y * w + x] * norm;
                }
            }
        }
        let out = Tensor::from_parts(vec![s[0], s[1], oh, ow], data);
        Ok(self.push(out, Op::AvgPool2d { x: ix, window }, &[ix]))
    }

    /// `x·wᵀ + b` with `x: [N,in]`, `w: [out,in]`, `b: [out]`; the bias row
    /// is the only broadcast the tape performs.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ix, iw, ib) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let (tx, tw, tb) = (
            &self.nodes[ix].value,
            &self.nodes[iw].value,
            &self.nodes[ib].value,
        );
        if tx.rank() != 2 || tw.rank() != 2 || tx.shape()[1] != tw.shape()[1] {
            return Err(shape_err("linear", tx, tw));
        }
        let (n, fin, fout) = (tx.shape()[0], tx.shape()[1], tw.shape()[0]);
        if tb.shape() != [fout] {
            return Err(shape_err("linear", tw, tb));
        }
        let mut data = vec![0.0; n * fout];
        for row in data.chunks_exact_mut(fout) {
            row.copy_from_slice(tb.data());
        }
        kernels::gemm(n, fin, fout, tx.data(), false, tw.data(), true, 1.0, &mut data);
        finite("linear", &data)?;
        let out = Tensor::from_parts(vec![n, fout], data);
        Ok(self.push(out, Op::Linear { x: ix, w: iw, b: ib }, &[ix, iw, ib]))
    }

    /// Mean squared difference, returned as a one-element tensor.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if ta.shape() != tb.shape() {
            return Err(shape_err("mse", ta, tb));
        }
        let n = ta.numel() as f64;
        let v: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        finite("mse", &[v])?;
        Ok(self.push(Tensor::scalar(v), Op::Mse(ia, ib), &[ia, ib]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.nodes[ix].value.sum();
        finite("sum", &[v])?;
        Ok(self.push(Tensor::scalar(v), Op::Sum(ix), &[ix]))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.node(x)?.value.numel() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.nodes[ix].value.scale(alpha);
        finite("scale", out.data())?;
        Ok(self.push(out, Op::Scale(ix, alpha), &[ix]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let ix = self.idx(x)?;
        let out = self.nodes[ix].value.reshape(shape)?;
        Ok(self.push(out, Op::Reshape(ix), &[ix]))
    }

    /// Propagates `d output / d leaf` into every differentiated leaf,
    /// accumulating onto gradients from earlier calls.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let out = self.idx(output)?;
        let out_value = &self.nodes[out].value;
        if !out_value.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: out_value.shape().to_vec(),
            });
        }
        if !self.nodes[out].needs_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out + 1];
        grads[out] = Some(vec![1.0]);
        let mut leaf_updates: Vec<(usize, Vec<f64>)> = Vec::new();

        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            let nodes = &self.nodes;
            let want = |j: usize| nodes[j].needs_grad;
            let val = |j: usize| &nodes[j].value;
            match nodes[i].op {
                Op::Leaf => {
                    if nodes[i].needs_grad {
                        leaf_updates.push((i, g));
                    }
                }
                Op::Add(a, b) => {
                    for j in [a, b] {
                        if want(j) {
                            acc(&mut grads, j, g.len())
                                .iter_mut()
                                .zip(&g)
                                .for_each(|(d, s)| *d += s);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    for (j, other) in [(a, b), (b, a)] {
                        if want(j) {
                            let o = val(other).data();
                            acc(&mut grads, j, g.len())
                                .iter_mut()
                                .zip(g.iter().zip(o))
                                .for_each(|(d, (s, y))| *d += s * y);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(a), val(b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    if want(a) {
                        let ga = acc(&mut grads, a, m * k);
                        kernels::gemm(m, n, k, &g, false, tb.data(), true, 1.0, ga);
                    }
                    if want(b) {
                        let gb = acc(&mut grads, b, k * n);
                        kernels::gemm(k, m, n, ta.data(), true, &g, false, 1.0, gb);
                    }
                }
                Op::Conv2d { x, k, geom } => {
                    let (tx, tk) = (val(x), val(k));
                    let o = tk.shape()[0];
                    let (rows, ncol) = (geom.col_rows(), geom.col_cols());
                    let img_len = geom.channels * geom.height * geom.width;
                    let mut cols = vec![0.0; rows * ncol];
                    let mut gcols = vec![0.0; rows * ncol];
                    for (n_idx, go) in g.chunks_exact(o * ncol).enumerate() {
                        let img = &tx.data()[n_idx * img_len..(n_idx + 1) * img_len];
                        if want(k) {
                            kernels::im2col(img, &geom, &mut cols);
                            let gk = acc(&mut grads, k, tk.numel());
                            kernels::gemm(o, ncol, rows, go, false, &cols, true, 1.0, gk);
                        }
                        if want(x) {
                            kernels::gemm(rows, o, ncol, tk.data(), true, go, false, 0.0, &mut gcols);
                            let gx = acc(&mut grads, x, tx.numel());
                            kernels::col2im(
                                &gcols,
                                &geom,
                                &mut gx[n_idx * img_len..(n_idx + 1) * img_len],
                            );
                        }
                    }
                }
                Op::ConvTranspose2d { x, k, geom } => {
                    let (tx, tk) = (val(x), val(k));
                    let c = tk.shape()[0];
                    let (rows, hw) = (geom.col_rows(), geom.col_cols());
                    let plane = geom.channels * geom.height * geom.width;
                    let mut gcols = vec![0.0; rows * hw];
                    for (n_idx, go) in g.chunks_exact(plane).enumerate() {
                        kernels::im2col(go, &geom, &mut gcols);
                        if want(x) {
                            let gx = acc(&mut grads, x, tx.numel());
                            let dst = &mut gx[n_idx * c * hw..(n_idx + 1) * c * hw];
                            kernels::gemm(c, rows, hw, tk.data(), false, &gcols, false, 1.0, dst);
                        }
                        if want(k) {
                            let img = &tx.data()[n_idx * c * hw..(n_idx + 1) * c * hw];
                            let gk = acc(&mut grads, k, tk.numel());
                            kernels::gemm(c, hw, rows, img, false, &gcols, true, 1.0, gk);
                        }
                    }
                }
                Op::AddChannel { x, v } => {
                    let tx = val(x);
                    let (c, hw) = (tx.shape()[1], tx.shape()[2] * tx.shape()[3]);
                    if want(x) {
                        acc(&mut grads, x, g.len())
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(d, s)| *d += s);
                    }
                    if want(v) {
                        let vlen = val(v).numel();
                        let shared = vlen == c;
                        let gv = acc(&mut grads, v, vlen);
                        for (p, plane) in g.chunks_exact(hw).enumerate() {
                            let slot = if shared { p % c } else { p };
                            gv[slot] += plane.iter().sum::<f64>();
                        }
                    }
                }
                Op::Silu(x) => {
                    let tx = val(x);
                    let gx = acc(&mut grads, x, g.len());
                    for ((d, s), &v) in gx.iter_mut().zip(&g).zip(tx.data()) {
                        let sg = kernels::sigmoid(v);
                        *d += s * (sg + v * sg * (1.0 - sg));
                    }
                }
                Op::LogSigmoid(x) => {
                    let tx = val(x);
                    let gx = acc(&mut grads, x, g.len());
                    for ((d, s), &v) in gx.iter_mut().zip(&g).zip(tx.data()) {
                        *d += s * kernels::sigmoid(-v);
                    }
                }
                Op::AvgPool2d { x, window } => {
                    let tx = val(x);
                    let (h, w) = (tx.shape()[2], tx.shape()[3]);
                    let (oh, ow) = (h / window, w / window);
                    let norm = 1.0 / (window * window) as f64;
                    let gx = acc(&mut grads, x, tx.numel());
                    for (plane, go) in gx.chunks_exact_mut(h * w).zip(g.chunks_exact(oh * ow)) {
                        for y in 0..h {
                            for xx in 0..w {
                                plane[y * w + xx] += go[(y / window) * ow + xx / window] * norm;
                            }
                        }
                    }
                }
                Op::Linear { x, w, b } => {
                    let (tx, tw) = (val(x), val(w));
                    let (n, fin, fout) = (tx.shape()[0], tx.shape()[1], tw.shape()[0]);
                    if want(x) {
                        let gx = acc(&mut grads, x, n * fin);
                        kernels::gemm(n, fout, fin, &g, false, tw.data(), false, 1.0, gx);
                    }
                    if want(w) {
                        let gw = acc(&mut grads, w, fout * fin);
                        kernels::gemm(fout, n, fin, &g, true, tx.data(), false, 1.0, gw);
                    }
                    if want(b) {
                        let gb = acc(&mut grads, b, fout);
                        for row in g.chunks_exact(fout) {
                            gb.iter_mut().zip(row).for_each(|(d, s)| *d += s);
                        }
                    }
                }
                Op::Mse(a, b) => {
                    let (ta, tb) = (val(a), val(b));
                    let coef = 2.0 * g[0] / ta.numel() as f64;
                    for (j, sign) in [(a, 1.0), (b, -1.0)] {
                        if want(j) {
                            let gj = acc(&mut grads, j, ta.numel());
                            for ((d, x), y) in gj.iter_mut().zip(ta.data()).zip(tb.data()) {
                                *d += sign * coef * (x - y);
                            }
                        }
                    }
                }
                Op::Sum(x) => {
                    let n = val(x).numel();
                    acc(&mut grads, x, n).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Scale(x, alpha) => {
                    acc(&mut grads, x, g.len())
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, s)| *d += alpha * s);
                }
                Op::Reshape(x) => {
                    acc(&mut grads, x, g.len())
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, s)| *d += s);
                }
            }
        }
        for (i, g) in leaf_updates {
            self.nodes[i].value.accumulate_grad(&g);
        }
        Ok(())
    }
}

/// Gradient of a scalar-valued function at `x`, together with its value.
///
/// `f` receives a fresh tape on which `x` is the only differentiated leaf;
/// anything else it loads should enter as a constant, so no parameter
/// gradient is produced as a side effect.
pub fn value_and_grad<F>(x: &Tensor, f: F) -> Result<(f64, Tensor)>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone())?;
    let out = f(&mut tape, xv)?;
    let value = tape.value(out).item()?;
    tape.backward(out)?;
    let grad = tape
        .grad(xv)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);
    Ok((value, Tensor::from_parts(x.shape().to_vec(), grad)))
}

pub fn grad_wrt_input<F>(x: &Tensor, f: F) -> Result<Tensor>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    value_and_grad(x, f).map(|(_, g)| g)
}
