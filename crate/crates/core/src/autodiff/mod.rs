//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records operations on a tape as they are evaluated. Parameter
//! nodes reference a borrowed [`ParamStore`] without copying; after
//! [`Graph::backward`], their gradients are summed into a [`Grads`] buffer.
//! Every value is a `rows × cols` matrix; vectors are `1 × n` rows.

mod adam;
mod gradcheck;
mod nn;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_difference_check, GradCheck, DEFAULT_FD_EPSILON, REL_ERROR_FLOOR};
pub use nn::{dropout_mask, lstm_cell, LstmParams, LstmState};
pub use params::{Grads, ManifestEntry, Param, ParamId, ParamStore};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Value {
    Owned(Vec<f64>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Gather(Var, usize),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    StackRows(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    AddN(Vec<Var>),
    Mask(Var, Vec<f64>),
    ConvMaxPool { input: Var, filters: Var, bias: Var, argmax: Vec<usize> },
    ConvSame { signal: Var, filters: Var, left: usize },
    Nll { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// A tape of evaluated operations.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    grads: Vec<Option<Vec<f64>>>,
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape {
        op,
        detail: alloc::format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Numerically stable softmax.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Graph<'p> {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            grads: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(x) => x,
            Value::Param(id) => self.params.values(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`backward`](Self::backward) target with respect
    /// to `v`, if any flowed to it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        assert_eq!(values.len(), rows * cols, "constant shape");
        self.push(rows, cols, values, Op::Leaf, false)
    }

    /// A leaf that receives a gradient, readable with [`grad`](Self::grad).
    pub fn input(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        assert_eq!(values.len(), rows * cols, "input shape");
        self.push(rows, cols, values, Op::Leaf, true)
    }

    /// Node for a stored parameter. Repeated calls return the same node so
    /// that all uses accumulate into one gradient.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let p = self.params.get(id);
        self.nodes.push(Node {
            rows: p.rows,
            cols: p.cols,
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// `a · b` for `a: m×k`, `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let s = av[i * k + p];
                if s != 0.0 {
                    axpy(row, s, &bv[p * n..(p + 1) * n]);
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`. With `a` a row vector this is the
    /// matrix-vector product `b a`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul_nt", (m, k), (n, k2)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ar = &av[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = dot(ar, &bv[j * k..(j + 1) * k]);
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, out, Op::MatMulNt(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a, b]);
        Ok(self.push(r, c, out, Op::Add(a, b), rg))
    }

    /// Adds the row vector `b: 1×n` to every row of `a: m×n`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(b) != (1, n) {
            return Err(shape_err("add_row", (m, n), self.shape(b)));
        }
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        out.chunks_mut(n.max(1)).for_each(|row| row.iter_mut().zip(bv).for_each(|(x, y)| *x += y));
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, out, Op::AddRow(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mul", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a, b]);
        Ok(self.push(r, c, out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * k).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a]);
        self.push(r, c, out, Op::Scale(a, k), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| libm::tanh(x)).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a]);
        self.push(r, c, out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a]);
        self.push(r, c, out, Op::Sigmoid(a), rg)
    }

    /// Softmax over all entries of `a`.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).to_vec();
        softmax_in_place(&mut out);
        let (r, c) = self.shape(a);
        let rg = self.rg(&[a]);
        self.push(r, c, out, Op::Softmax(a), rg)
    }

    /// Row `row` of `table` as a `1×n` vector (embedding lookup).
    pub fn gather(&mut self, table: Var, row: usize) -> Result<Var> {
        let (m, n) = self.shape(table);
        if row >= m {
            return Err(Error::Shape {
                op: "gather",
                detail: alloc::format!("row {row} of {m}x{n}"),
            });
        }
        let out = self.value(table)[row * n..(row + 1) * n].to_vec();
        let rg = self.rg(&[table]);
        Ok(self.push(1, n, out, Op::Gather(table, row), rg))
    }

    /// Concatenates along columns; all parts need the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|&p| self.shape(p).0).unwrap_or(1);
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(shape_err("concat", (rows, cols), (r, c)));
            }
            cols += c;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if start + len > n {
            return Err(Error::Shape {
                op: "slice_cols",
                detail: alloc::format!("{start}..{} of {m}x{n}", start + len),
            });
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&av[i * n + start..i * n + start + len]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(m, len, out, Op::SliceCols(a, start), rg))
    }

    /// Stacks `1×n` rows into an `m×n` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let n = rows.first().map(|&r| self.shape(r).1).unwrap_or(0);
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.shape(r) != (1, n) {
                return Err(shape_err("stack_rows", (1, n), self.shape(r)));
            }
            out.extend_from_slice(self.value(r));
        }
        let rg = self.rg(rows);
        Ok(self.push(rows.len(), n, out, Op::StackRows(rows.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if m * n != rows * cols {
            return Err(shape_err("reshape", (m, n), (rows, cols)));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(rows, cols, out, Op::Reshape(a), rg))
    }

    /// Sum of all entries as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(1, 1, vec![s], Op::Sum(a), rg)
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Ok(self.constant(1, 1, vec![0.0]));
        };
        let shape = self.shape(first);
        let mut out = vec![0.0; shape.0 * shape.1];
        for &p in parts {
            if self.shape(p) != shape {
                return Err(shape_err("add_n", shape, self.shape(p)));
            }
            out.iter_mut().zip(self.value(p)).for_each(|(o, x)| *o += x);
        }
        let rg = self.rg(parts);
        Ok(self.push(shape.0, shape.1, out, Op::AddN(parts.to_vec()), rg))
    }

    /// Elementwise product with a constant mask (used for dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if mask.len() != r * c {
            return Err(shape_err("mask", (r, c), (1, mask.len())));
        }
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(r, c, out, Op::Mask(a, mask), rg))
    }

    /// Valid stride-1 convolution of `input: L×C` with `k` filters stored as
    /// rows of `filters: k×(w·C)` (window rows concatenated), plus `bias: 1×k`,
    /// followed by max-pooling over time. Returns `1×k`. Ties pick the first
    /// position.
    pub fn conv1d_maxpool(&mut self, input: Var, filters: Var, bias: Var) -> Result<Var> {
        let (len, ch) = self.shape(input);
        let (k, span) = self.shape(filters);
        if ch == 0 || span % ch != 0 || self.shape(bias) != (1, k) {
            return Err(shape_err("conv1d_maxpool", (len, ch), (k, span)));
        }
        let width = span / ch;
        if len < width || width == 0 {
            return Err(Error::Contract(alloc::format!(
                "conv1d_maxpool: input of {len} frames is shorter than filter width {width}"
            )));
        }
        let (iv, fv, bv) = (self.value(input), self.value(filters), self.value(bias));
        let positions = len - width + 1;
        let mut out = vec![0.0; k];
        let mut argmax = vec![0usize; k];
        for j in 0..k {
            let f = &fv[j * span..(j + 1) * span];
            let mut best = f64::NEG_INFINITY;
            let mut best_t = 0;
            for t in 0..positions {
                let v = dot(f, &iv[t * ch..t * ch + span]);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            out[j] = best + bv[j];
            argmax[j] = best_t;
        }
        let rg = self.rg(&[input, filters, bias]);
        Ok(self.push(
            1,
            k,
            out,
            Op::ConvMaxPool {
                input,
                filters,
                bias,
                argmax,
            },
            rg,
        ))
    }

    /// Same-length convolution of a `1×T` signal with `k` filters of width
    /// `r` (`filters: k×r`), zero padded with `(r-1)/2` positions on the left.
    /// Output is `T×k` with `out[i][j] = Σ_o filters[j][o] · signal[i + left - o]`,
    /// so a one-hot signal at `p` reproduces each filter centered at `p`.
    pub fn conv_same(&mut self, signal: Var, filters: Var) -> Result<Var> {
        let (one, t) = self.shape(signal);
        let (k, r) = self.shape(filters);
        if one != 1 || r == 0 {
            return Err(shape_err("conv_same", (one, t), (k, r)));
        }
        let left = (r - 1) / 2;
        let (sv, fv) = (self.value(signal), self.value(filters));
        let mut out = vec![0.0; t * k];
        for i in 0..t {
            // o ranges over filter taps whose signal index i + left - o is in [0, t).
            let o_lo = (i + left + 1).saturating_sub(t);
            let o_hi = (i + left).min(r - 1);
            for j in 0..k {
                let f = &fv[j * r..(j + 1) * r];
                let mut acc = 0.0;
                for o in o_lo..=o_hi {
                    acc += f[o] * sv[i + left - o];
                }
                out[i * k + j] = acc;
            }
        }
        let rg = self.rg(&[signal, filters]);
        Ok(self.push(t, k, out, Op::ConvSame { signal, filters, left }, rg))
    }

    /// Cross-entropy `-log softmax(logits)[target]` as a `1×1` node.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.value(logits).len();
        if target >= n {
            return Err(Error::Shape {
                op: "nll",
                detail: alloc::format!("target {target} of {n} classes"),
            });
        }
        let mut probs = self.value(logits).to_vec();
        softmax_in_place(&mut probs);
        let z = self.value(logits);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(z.iter().map(|x| libm::exp(x - max)).sum::<f64>());
        let loss = lse - z[target];
        let rg = self.rg(&[logits]);
        Ok(self.push(1, 1, vec![loss], Op::Nll { logits, target, probs }, rg))
    }

    /// Back-propagates from the scalar `loss` with seed gradient 1.
    pub fn backward(&mut self, loss: Var) {
        self.backward_scaled(loss, 1.0);
    }

    /// Back-propagates from `loss` with seed gradient `seed`, so parameter
    /// gradients are those of `seed · loss`.
    pub fn backward_scaled(&mut self, loss: Var, seed: f64) {
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        let (r, c) = self.shape(loss);
        grads[loss.0] = Some(vec![seed; r * c]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.grads = grads;
    }

    /// Adds the gradients of all parameter nodes into `out`.
    pub fn accumulate_param_grads(&self, out: &mut Grads) {
        for (i, node) in self.param_nodes.iter().enumerate() {
            if let Some(v) = node {
                if let Some(g) = self.grad(*v) {
                    out.get_mut(ParamId(i)).iter_mut().zip(g).for_each(|(o, x)| *o += x);
                }
            }
        }
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = match &node.value {
            Value::Owned(v) => v.as_slice(),
            Value::Param(_) => return,
        };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = &self.nodes[v.0];
            if !n.requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n.rows * n.cols]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |da| {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            da[i * k + p] += dot(gi, &bv[p * n..(p + 1) * n]);
                        }
                    }
                });
                acc(*b, &mut |db| {
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let s = av[i * k + p];
                            if s != 0.0 {
                                axpy(&mut db[p * n..(p + 1) * n], s, gi);
                            }
                        }
                    }
                });
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).0;
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |da| {
                    for i in 0..m {
                        for j in 0..n {
                            let s = g[i * n + j];
                            if s != 0.0 {
                                axpy(&mut da[i * k..(i + 1) * k], s, &bv[j * k..(j + 1) * k]);
                            }
                        }
                    }
                });
                acc(*b, &mut |db| {
                    for i in 0..m {
                        for j in 0..n {
                            let s = g[i * n + j];
                            if s != 0.0 {
                                axpy(&mut db[j * k..(j + 1) * k], s, &av[i * k..(i + 1) * k]);
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |d| axpy(d, 1.0, g));
                acc(*b, &mut |d| axpy(d, 1.0, g));
            }
            Op::AddRow(a, b) => {
                let n = self.shape(*b).1;
                acc(*a, &mut |d| axpy(d, 1.0, g));
                acc(*b, &mut |d| {
                    for row in g.chunks(n.max(1)) {
                        axpy(d, 1.0, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |d| d.iter_mut().zip(g).zip(bv).for_each(|((d, g), y)| *d += g * y));
                acc(*b, &mut |d| d.iter_mut().zip(g).zip(av).for_each(|((d, g), x)| *d += g * x));
            }
            Op::Scale(a, k) => acc(*a, &mut |d| axpy(d, *k, g)),
            Op::Tanh(a) => acc(*a, &mut |d| {
                d.iter_mut().zip(g).zip(out).for_each(|((d, g), y)| *d += g * (1.0 - y * y))
            }),
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                d.iter_mut().zip(g).zip(out).for_each(|((d, g), y)| *d += g * y * (1.0 - y))
            }),
            Op::Softmax(a) => {
                let s = dot(g, out);
                acc(*a, &mut |d| {
                    d.iter_mut().zip(g).zip(out).for_each(|((d, g), y)| *d += y * (g - s))
                });
            }
            Op::Gather(table, row) => {
                let n = node.cols;
                acc(*table, &mut |d| axpy(&mut d[row * n..(row + 1) * n], 1.0, g));
            }
            Op::ConcatCols(parts) => {
                let rows = node.rows;
                let total = node.cols;
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    acc(p, &mut |d| {
                        for i in 0..rows {
                            axpy(&mut d[i * c..(i + 1) * c], 1.0, &g[i * total + offset..i * total + offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::SliceCols(a, start) => {
                let n = self.shape(*a).1;
                let len = node.cols;
                acc(*a, &mut |d| {
                    for i in 0..node.rows {
                        axpy(&mut d[i * n + start..i * n + start + len], 1.0, &g[i * len..(i + 1) * len]);
                    }
                });
            }
            Op::StackRows(rows) => {
                let n = node.cols;
                for (i, &r) in rows.iter().enumerate() {
                    acc(r, &mut |d| axpy(d, 1.0, &g[i * n..(i + 1) * n]));
                }
            }
            Op::Reshape(a) => acc(*a, &mut |d| axpy(d, 1.0, g)),
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0])),
            Op::AddN(parts) => {
                for &p in parts {
                    acc(p, &mut |d| axpy(d, 1.0, g));
                }
            }
            Op::Mask(a, mask) => acc(*a, &mut |d| {
                d.iter_mut().zip(g).zip(mask).for_each(|((d, g), m)| *d += g * m)
            }),
            Op::ConvMaxPool {
                input,
                filters,
                bias,
                argmax,
            } => {
                let ch = self.shape(*input).1;
                let span = self.shape(*filters).1;
                let (iv, fv) = (self.value(*input), self.value(*filters));
                acc(*input, &mut |d| {
                    for (j, &t) in argmax.iter().enumerate() {
                        axpy(&mut d[t * ch..t * ch + span], g[j], &fv[j * span..(j + 1) * span]);
                    }
                });
                acc(*filters, &mut |d| {
                    for (j, &t) in argmax.iter().enumerate() {
                        axpy(&mut d[j * span..(j + 1) * span], g[j], &iv[t * ch..t * ch + span]);
                    }
                });
                acc(*bias, &mut |d| axpy(d, 1.0, g));
            }
            Op::ConvSame { signal, filters, left } => {
                let t = self.shape(*signal).1;
                let (k, r) = self.shape(*filters);
                let (sv, fv) = (self.value(*signal), self.value(*filters));
                let left = *left;
                acc(*signal, &mut |d| {
                    for i in 0..t {
                        let o_lo = (i + left + 1).saturating_sub(t);
                        let o_hi = (i + left).min(r - 1);
                        for j in 0..k {
                            let gij = g[i * k + j];
                            for o in o_lo..=o_hi {
                                d[i + left - o] += gij * fv[j * r + o];
                            }
                        }
                    }
                });
                acc(*filters, &mut |d| {
                    for i in 0..t {
                        let o_lo = (i + left + 1).saturating_sub(t);
                        let o_hi = (i + left).min(r - 1);
                        for j in 0..k {
                            let gij = g[i * k + j];
                            for o in o_lo..=o_hi {
                                d[j * r + o] += gij * sv[i + left - o];
                            }
                        }
                    }
                });
            }
            Op::Nll { logits, target, probs } => acc(*logits, &mut |d| {
                for (i, (d, p)) in d.iter_mut().zip(probs).enumerate() {
                    let onehot = if i == *target { 1.0 } else { 0.0 };
                    *d += g[0] * (p - onehot);
                }
            }),
        }
    }
}

#[cfg(test)]
mod tests;
