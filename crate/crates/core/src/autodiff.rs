//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] is an arena of [`ParamNode`]s. Every operation appends a node
//! whose inputs already live on the tape, so arena order is a topological
//! order and [`Tape::backward`] is a single reverse sweep that visits each
//! node once.
//!
//! ```
//! use gnnlab_core::autodiff::Tape;
//! use gnnlab_core::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::from_rows(&[[-1.0, 2.0]])).unwrap();
//! let r = tape.relu(w).unwrap();
//! let loss = tape.sum(r).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap().data(), &[0.0, 1.0]);
//! ```
//!
//! Calling `backward` twice without [`Tape::reset_grads`] is an error rather
//! than a silent accumulation.

use std::sync::Arc;

use rand::Rng;

use crate::sparse::SparseMatrix;
use crate::tensor::{matmul_a_bt_into, matmul_at_b_into, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Affine(Var, f64),
    MulScalar(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    Mask(Var, Arc<Vec<f64>>),
    RowSoftmax(Var),
    LogRowSoftmax(Var),
    ConcatCols(Vec<Var>),
    Max(Vec<Var>, Vec<u32>),
    Sum(Var),
    Index(Var, usize),
    MaskedNll(Var, Arc<Vec<(usize, usize)>>),
    GatAttention {
        wh: Var,
        a_dst: Var,
        a_src: Var,
        pattern: Arc<SparseMatrix>,
        slope: f64,
        scores: Vec<f64>,
        alpha: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::SpMM(..) => "spmm",
            Op::Add(..) => "add",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Affine(..) => "affine",
            Op::MulScalar(..) => "mul_scalar",
            Op::Relu(..) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Elu(..) => "elu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Mask(..) => "dropout",
            Op::RowSoftmax(..) => "row_softmax",
            Op::LogRowSoftmax(..) => "log_row_softmax",
            Op::ConcatCols(..) => "concat_cols",
            Op::Max(..) => "max",
            Op::Sum(..) => "sum",
            Op::Index(..) => "index",
            Op::MaskedNll(..) => "masked_nll",
            Op::GatAttention { .. } => "gat_attention",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddBias(a, b) | Op::MulScalar(a, b) => {
                vec![*a, *b]
            }
            Op::SpMM(_, x)
            | Op::Scale(x, _)
            | Op::Affine(x, _)
            | Op::Relu(x)
            | Op::LeakyRelu(x, _)
            | Op::Elu(x)
            | Op::Sigmoid(x)
            | Op::Mask(x, _)
            | Op::RowSoftmax(x)
            | Op::LogRowSoftmax(x)
            | Op::Sum(x)
            | Op::Index(x, _)
            | Op::MaskedNll(x, _) => vec![*x],
            Op::ConcatCols(xs) | Op::Max(xs, _) => xs.clone(),
            Op::GatAttention {
                wh, a_dst, a_src, ..
            } => vec![*wh, *a_dst, *a_src],
        }
    }
}

/// A value on the tape together with its gradient slot and provenance.
#[derive(Clone, Debug)]
pub struct ParamNode {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

impl ParamNode {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn op_name(&self) -> &'static str {
        self.op.name()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<ParamNode>,
    backward_done: bool,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn add_into(dst: &mut Option<Tensor>, src: &[f64], shape: &[usize]) {
    match dst {
        Some(t) => t.data_mut().iter_mut().zip(src).for_each(|(d, s)| *d += s),
        None => *dst = Some(Tensor::new(shape.to_vec(), src.to_vec()).expect("shape")),
    }
}

fn grad_slot<'a>(slots: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut [f64] {
    let slot = &mut slots[v.0];
    if slot.is_none() {
        *slot = Some(Tensor::zeros(shape));
    }
    slot.as_mut().unwrap().data_mut()
}

/// Per-edge attention scores and coefficients over the pattern of `pattern`:
/// `s_ij = a_dst . wh_i + a_src . wh_j`, `alpha_ij = softmax_j leaky(s_ij)`.
pub fn gat_attention_coefficients(
    wh: &Tensor,
    a_dst: &[f64],
    a_src: &[f64],
    pattern: &SparseMatrix,
    slope: f64,
) -> (Vec<f64>, Vec<f64>) {
    let f = wh.cols();
    let n = wh.rows();
    let dot = |row: &[f64], a: &[f64]| row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    let dst: Vec<f64> = (0..n).map(|i| dot(wh.row(i), a_dst)).collect();
    let src: Vec<f64> = (0..n).map(|j| dot(wh.row(j), a_src)).collect();
    debug_assert_eq!(a_dst.len(), f);
    let mut scores = Vec::with_capacity(pattern.nnz());
    let mut alpha = Vec::with_capacity(pattern.nnz());
    for i in 0..pattern.n_rows() {
        let start = scores.len();
        for (j, _) in pattern.row(i) {
            scores.push(dst[i] + src[j]);
        }
        let e: Vec<f64> = scores[start..]
            .iter()
            .map(|&s| if s > 0.0 { s } else { slope * s })
            .collect();
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        alpha.extend(exps.iter().map(|v| v / z));
    }
    (scores, alpha)
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

    pub fn node(&self, v: Var) -> &ParamNode {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let requires_grad = op
            .inputs()
            .iter()
            .any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(ParamNode {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        self.nodes.push(ParamNode {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.push_leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, x: Var) -> Result<Var, TensorError> {
        let out = s.spmm(self.value(x))?;
        self.push(out, Op::SpMM(Arc::clone(s), x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("add", ta, tb));
        }
        let out = ta.add(tb)?;
        self.push(out, Op::Add(a, b))
    }

    /// `x + b` with the row vector `b` broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.len() != tx.cols() {
            return Err(dim_err("add_bias", tx, tb));
        }
        let mut out = tx.clone();
        let c = tx.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tb.data()[i % c];
        }
        self.push(out, Op::AddBias(x, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        let out = self.value(x).scale(c);
        self.push(out, Op::Scale(x, c))
    }

    /// `a * x + c` entrywise; the multiplier `a` is stored in the op record.
    pub fn affine(&mut self, x: Var, a: f64, c: f64) -> Result<Var, TensorError> {
        let out = self.value(x).map(|v| a * v + c);
        self.push(out, Op::Affine(x, a))
    }

    /// `s * x` for a single-valued `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var, TensorError> {
        let ts = self.value(s);
        if ts.len() != 1 {
            return Err(dim_err("mul_scalar", self.value(x), ts));
        }
        let k = ts.data()[0];
        let out = self.value(x).scale(k);
        self.push(out, Op::MulScalar(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, TensorError> {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(x, slope))
    }

    pub fn elu(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        self.push(out, Op::Elu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(out, Op::Sigmoid(x))
    }

    /// Inverted dropout: zeroes entries with probability `p` and scales the
    /// survivors by `1 / (1 - p)`. `p == 0` returns `x` unchanged.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidArgument(format!(
                "dropout rate {p} outside [0, 1)"
            )));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mut out = self.value(x).clone();
        out.data_mut()
            .iter_mut()
            .zip(&mask)
            .for_each(|(v, m)| *v *= m);
        self.push(out, Op::Mask(x, Arc::new(mask)))
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let mut out = self.value(x).clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        self.push(out, Op::RowSoftmax(x))
    }

    pub fn log_row_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let mut out = self.value(x).clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(out, Op::LogRowSoftmax(x))
    }

    /// Concatenation along the feature (column) axis.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var, TensorError> {
        let first = xs
            .first()
            .ok_or_else(|| TensorError::InvalidArgument("concat of nothing".into()))?;
        let rows = self.value(*first).rows();
        for &x in xs {
            if self.value(x).rows() != rows {
                return Err(dim_err("concat_cols", self.value(*first), self.value(x)));
            }
        }
        let total: usize = xs.iter().map(|&x| self.value(x).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &x in xs {
                data.extend_from_slice(self.value(x).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        self.push(out, Op::ConcatCols(xs.to_vec()))
    }

    /// Entrywise maximum; ties resolve to the earliest input.
    pub fn max(&mut self, xs: &[Var]) -> Result<Var, TensorError> {
        let first = *xs
            .first()
            .ok_or_else(|| TensorError::InvalidArgument("max of nothing".into()))?;
        for &x in xs {
            if self.value(x).shape() != self.value(first).shape() {
                return Err(dim_err("max", self.value(first), self.value(x)));
            }
        }
        let mut out = self.value(first).clone();
        let mut arg = vec![0u32; out.len()];
        for (k, &x) in xs.iter().enumerate().skip(1) {
            for (p, &v) in self.value(x).data().iter().enumerate() {
                if v > out.data()[p] {
                    out.data_mut()[p] = v;
                    arg[p] = k as u32;
                }
            }
        }
        self.push(out, Op::Max(xs.to_vec(), arg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Picks the `i`-th entry (row-major) as a single-valued node.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var, TensorError> {
        let t = self.value(x);
        if i >= t.len() {
            return Err(TensorError::InvalidArgument(format!(
                "index {i} out of range for {} values",
                t.len()
            )));
        }
        let v = t.data()[i];
        self.push(Tensor::scalar(v), Op::Index(x, i))
    }

    /// Mean negative log-probability at `(row, label)` targets.
    pub fn masked_nll(
        &mut self,
        log_probs: Var,
        targets: Arc<Vec<(usize, usize)>>,
    ) -> Result<Var, TensorError> {
        if targets.is_empty() {
            return Err(TensorError::InvalidArgument("empty target set".into()));
        }
        let lp = self.value(log_probs);
        let mut total = 0.0;
        for &(r, c) in targets.iter() {
            if r >= lp.rows() || c >= lp.cols() {
                return Err(TensorError::InvalidArgument(format!(
                    "target ({r}, {c}) outside {:?}",
                    lp.shape()
                )));
            }
            total -= lp.get(r, c);
        }
        let loss = total / targets.len() as f64;
        self.push(Tensor::scalar(loss), Op::MaskedNll(log_probs, targets))
    }

    /// Attention aggregation `out_i = sum_j alpha_ij wh_j` over the pattern of
    /// `pattern` (which must include self-loops), with feedforward scores
    /// `leaky(a_dst . wh_i + a_src . wh_j)`.
    pub fn gat_attention(
        &mut self,
        wh: Var,
        a_dst: Var,
        a_src: Var,
        pattern: &Arc<SparseMatrix>,
        slope: f64,
    ) -> Result<Var, TensorError> {
        let twh = self.value(wh);
        let (n, f) = (twh.rows(), twh.cols());
        if self.value(a_dst).len() != f || self.value(a_src).len() != f {
            return Err(dim_err("gat_attention", twh, self.value(a_dst)));
        }
        if pattern.n_rows() != n || pattern.n_cols() != n {
            return Err(TensorError::Dimension {
                op: "gat_attention",
                left: vec![pattern.n_rows(), pattern.n_cols()],
                right: twh.shape().to_vec(),
            });
        }
        if let Some(i) = (0..n).find(|&i| pattern.row(i).next().is_none()) {
            return Err(TensorError::InvalidArgument(format!(
                "node {i} has an empty attention neighborhood"
            )));
        }
        let (scores, alpha) = gat_attention_coefficients(
            twh,
            self.value(a_dst).data(),
            self.value(a_src).data(),
            pattern,
            slope,
        );
        let mut out = vec![0.0; n * f];
        let mut p = 0;
        for i in 0..n {
            let out_row = &mut out[i * f..(i + 1) * f];
            for (j, _) in pattern.row(i) {
                let a = alpha[p];
                for (o, &x) in out_row.iter_mut().zip(twh.row(j)) {
                    *o += a * x;
                }
                p += 1;
            }
        }
        let out = Tensor::new(vec![n, f], out)?;
        self.push(
            out,
            Op::GatAttention {
                wh,
                a_dst,
                a_src,
                pattern: Arc::clone(pattern),
                slope,
                scores,
                alpha,
            },
        )
    }

    /// Clears all gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    /// Populates `grad` on every node that requires one with `d loss / d value`.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.backward_done {
            return Err(TensorError::GradientsPopulated);
        }
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.op.inputs().iter().any(|v| v.0 >= idx) {
                return Err(TensorError::Cycle(idx));
            }
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(loss_value.shape()));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(idx);
            let Some(g) = upper[0].as_ref() else { continue };
            self.propagate(idx, g, lower);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = Some(g.unwrap_or_else(|| Tensor::zeros(node.value.shape())));
            }
        }
        self.backward_done = true;
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &Tensor, lower: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.wants(*a) {
                    let slot = grad_slot(lower, *a, ta.shape());
                    matmul_a_bt_into(gd, tb.data(), slot, m, n, k);
                }
                if self.wants(*b) {
                    let slot = grad_slot(lower, *b, tb.shape());
                    matmul_at_b_into(ta.data(), gd, slot, m, k, n);
                }
            }
            Op::SpMM(s, x) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    let slot = grad_slot(lower, *x, tx.shape());
                    s.spmm_transpose_into(gd, slot, tx.cols());
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        add_into(&mut lower[v.0], gd, g.shape());
                    }
                }
            }
            Op::AddBias(x, b) => {
                if self.wants(*x) {
                    add_into(&mut lower[x.0], gd, g.shape());
                }
                if self.wants(*b) {
                    let tb = self.value(*b);
                    let c = tb.len();
                    let slot = grad_slot(lower, *b, tb.shape());
                    for row in gd.chunks(c) {
                        slot.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                    }
                }
            }
            Op::Scale(x, c) | Op::Affine(x, c) => {
                if self.wants(*x) {
                    let scaled: Vec<f64> = gd.iter().map(|v| v * c).collect();
                    add_into(&mut lower[x.0], &scaled, g.shape());
                }
            }
            Op::MulScalar(x, s) => {
                let k = self.value(*s).data()[0];
                if self.wants(*x) {
                    let scaled: Vec<f64> = gd.iter().map(|v| v * k).collect();
                    add_into(&mut lower[x.0], &scaled, g.shape());
                }
                if self.wants(*s) {
                    let dot: f64 = gd.iter().zip(self.value(*x).data()).map(|(a, b)| a * b).sum();
                    let ts = self.value(*s);
                    grad_slot(lower, *s, ts.shape())[0] += dot;
                }
            }
            Op::Relu(x) | Op::LeakyRelu(x, _) | Op::Elu(x) | Op::Sigmoid(x) | Op::Mask(x, _) => {
                if !self.wants(*x) {
                    return;
                }
                let xin = self.value(*x).data();
                let y = node.value.data();
                let local: Vec<f64> = match &node.op {
                    Op::Relu(_) => gd
                        .iter()
                        .zip(xin)
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect(),
                    Op::LeakyRelu(_, slope) => gd
                        .iter()
                        .zip(xin)
                        .map(|(g, &v)| if v > 0.0 { *g } else { slope * g })
                        .collect(),
                    Op::Elu(_) => gd
                        .iter()
                        .zip(xin.iter().zip(y))
                        .map(|(g, (&v, &yv))| if v > 0.0 { *g } else { g * (yv + 1.0) })
                        .collect(),
                    Op::Sigmoid(_) => gd
                        .iter()
                        .zip(y)
                        .map(|(g, &yv)| g * yv * (1.0 - yv))
                        .collect(),
                    Op::Mask(_, mask) => gd.iter().zip(mask.iter()).map(|(g, m)| g * m).collect(),
                    _ => unreachable!(),
                };
                add_into(&mut lower[x.0], &local, g.shape());
            }
            Op::RowSoftmax(x) => {
                if !self.wants(*x) {
                    return;
                }
                let c = g.cols();
                let mut local = vec![0.0; gd.len()];
                for ((lrow, grow), yrow) in local
                    .chunks_mut(c)
                    .zip(gd.chunks(c))
                    .zip(node.value.data().chunks(c))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for ((l, gv), yv) in lrow.iter_mut().zip(grow).zip(yrow) {
                        *l = yv * (gv - dot);
                    }
                }
                add_into(&mut lower[x.0], &local, g.shape());
            }
            Op::LogRowSoftmax(x) => {
                if !self.wants(*x) {
                    return;
                }
                let c = g.cols();
                let mut local = vec![0.0; gd.len()];
                for ((lrow, grow), yrow) in local
                    .chunks_mut(c)
                    .zip(gd.chunks(c))
                    .zip(node.value.data().chunks(c))
                {
                    let total: f64 = grow.iter().sum();
                    for ((l, gv), yv) in lrow.iter_mut().zip(grow).zip(yrow) {
                        *l = gv - yv.exp() * total;
                    }
                }
                add_into(&mut lower[x.0], &local, g.shape());
            }
            Op::ConcatCols(xs) => {
                let total = g.cols();
                let mut offset = 0;
                for &x in xs {
                    let tx = self.value(x);
                    let c = tx.cols();
                    if self.wants(x) {
                        let slot = grad_slot(lower, x, tx.shape());
                        for r in 0..tx.rows() {
                            let src = &gd[r * total + offset..r * total + offset + c];
                            slot[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(s, v)| *s += v);
                        }
                    }
                    offset += c;
                }
            }
            Op::Max(xs, arg) => {
                for (k, &x) in xs.iter().enumerate() {
                    if !self.wants(x) {
                        continue;
                    }
                    let slot = grad_slot(lower, x, self.value(x).shape());
                    for (p, &a) in arg.iter().enumerate() {
                        if a as usize == k {
                            slot[p] += gd[p];
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    let slot = grad_slot(lower, *x, tx.shape());
                    slot.iter_mut().for_each(|s| *s += gd[0]);
                }
            }
            Op::Index(x, i) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    grad_slot(lower, *x, tx.shape())[*i] += gd[0];
                }
            }
            Op::MaskedNll(x, targets) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let w = gd[0] / targets.len() as f64;
                    let slot = grad_slot(lower, *x, tx.shape());
                    for &(r, l) in targets.iter() {
                        slot[r * c + l] -= w;
                    }
                }
            }
            Op::GatAttention {
                wh,
                a_dst,
                a_src,
                pattern,
                slope,
                scores,
                alpha,
            } => {
                let twh = self.value(*wh);
                let f = twh.cols();
                let n = twh.rows();
                let ad = self.value(*a_dst).data();
                let asrc = self.value(*a_src).data();
                let mut g_wh = vec![0.0; n * f];
                let mut g_ad = vec![0.0; f];
                let mut g_as = vec![0.0; f];
                let mut p = 0;
                for i in 0..n {
                    let gi = &gd[i * f..(i + 1) * f];
                    let start = p;
                    let nbrs: Vec<usize> = pattern.row(i).map(|(j, _)| j).collect();
                    let dalpha: Vec<f64> = nbrs
                        .iter()
                        .map(|&j| gi.iter().zip(twh.row(j)).map(|(a, b)| a * b).sum())
                        .collect();
                    let weighted: f64 = dalpha
                        .iter()
                        .zip(&alpha[start..start + nbrs.len()])
                        .map(|(d, a)| d * a)
                        .sum();
                    for (q, &j) in nbrs.iter().enumerate() {
                        let a = alpha[start + q];
                        for (o, &gv) in g_wh[j * f..(j + 1) * f].iter_mut().zip(gi) {
                            *o += a * gv;
                        }
                        let de = a * (dalpha[q] - weighted);
                        let ds = if scores[start + q] > 0.0 { de } else { slope * de };
                        for t in 0..f {
                            g_wh[i * f + t] += ds * ad[t];
                            g_wh[j * f + t] += ds * asrc[t];
                            g_ad[t] += ds * twh.get(i, t);
                            g_as[t] += ds * twh.get(j, t);
                        }
                    }
                    p += nbrs.len();
                }
                if self.wants(*wh) {
                    add_into(&mut lower[wh.0], &g_wh, twh.shape());
                }
                if self.wants(*a_dst) {
                    add_into(&mut lower[a_dst.0], &g_ad, self.value(*a_dst).shape());
                }
                if self.wants(*a_src) {
                    add_into(&mut lower[a_src.0], &g_as, self.value(*a_src).shape());
                }
            }
        }
    }
}
