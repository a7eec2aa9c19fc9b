//! Reverse-mode automatic differentiation over rank-2 tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass. Each
//! node keeps what its backward rule needs; [`Graph::backward`] walks the
//! record in reverse and returns the gradient of a scalar with respect to
//! every node. Parameters are read in place from a [`ParamStore`].

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::ctc;
use super::error::{Result, TensorError};
use super::params::{GradStore, ParamId, ParamStore};
use super::tensor::{matmul_into, Tensor};

/// Index of a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

enum Op<T> {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    MatMulNt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Dropout(NodeId, Vec<T>),
    Embedding(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize),
    ConcatRows(Vec<NodeId>),
    RepeatRows(NodeId, Vec<usize>),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        kernel: usize,
        cols: Tensor<T>,
    },
    CrossEntropy {
        logits: NodeId,
        probs: Tensor<T>,
        targets: Vec<usize>,
        pad: Option<usize>,
        count: usize,
    },
    L1L2 {
        pred: NodeId,
        diff: Tensor<T>,
        row_mask: Vec<bool>,
        count: usize,
    },
    Ctc(NodeId, Tensor<T>),
    Sum(NodeId),
    Mean(NodeId),
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
}

/// Recorded computation.
pub struct Graph<'p, T: Scalar> {
    params: Option<&'p ParamStore<T>>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, NodeId>,
    rng: Option<ChaCha8Rng>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn finite<T: Scalar>(t: Tensor<T>, op: &'static str) -> Result<Tensor<T>> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn dims<T: Scalar>(t: &Tensor<T>) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Evaluation-mode graph over `params` (dropout is the identity).
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            rng: None,
        }
    }

    /// Graph with no parameter store, for standalone computations.
    pub fn standalone() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            rng: None,
        }
    }

    /// Switch to training mode; dropout masks are drawn from `rng`.
    pub fn with_dropout_rng(mut self, rng: ChaCha8Rng) -> Self {
        self.rng = Some(rng);
        self
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    /// Hand back the dropout generator so its stream continues across graphs.
    pub fn take_rng(&mut self) -> Option<ChaCha8Rng> {
        self.rng.take()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.params.expect("param node without a store").get(*p),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf holding `value`; its gradient is available after backward.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        assert!(self.params.is_some(), "graph has no parameter store");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta.shape(), tb.shape()));
        }
        let (m, n) = (ta.rows(), tb.cols());
        let mut out = vec![T::zero(); m * n];
        matmul_into(ta, false, tb, false, &mut out, false);
        let out = finite(Tensor::matrix(m, n, out)?, "matmul")?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(mismatch("matmul_nt", ta.shape(), tb.shape()));
        }
        let (m, n) = (ta.rows(), tb.rows());
        let mut out = vec![T::zero(); m * n];
        matmul_into(ta, false, tb, true, &mut out, false);
        let out = finite(Tensor::matrix(m, n, out)?, "matmul_nt")?;
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if dims(ta) != dims(tb) {
            return Err(mismatch("add", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let out = finite(Tensor::matrix(ta.rows(), ta.cols(), data)?, "add")?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Add a `[1, C]` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.len() != ta.cols() {
            return Err(mismatch("add_row", ta.shape(), tr.shape()));
        }
        let mut out = Tensor::matrix(ta.rows(), ta.cols(), ta.data().to_vec())?;
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        let out = finite(out, "add_row")?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if dims(ta) != dims(tb) {
            return Err(mismatch("mul", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let out = finite(Tensor::matrix(ta.rows(), ta.cols(), data)?, "mul")?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> Result<NodeId> {
        let out = finite(self.value(a).map(|v| v * s), "scale")?;
        Ok(self.push(out, Op::Scale(a, s)))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|v| v.max(T::zero()));
        Ok(self.push(out, Op::Relu(a)))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|v| v.tanh());
        Ok(self.push(out, Op::Tanh(a)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).map(|v| T::one() / (T::one() + (-v).exp()));
        Ok(self.push(out, Op::Sigmoid(a)))
    }

    /// Row-wise softmax. `blocked[i]` set excludes entry `i` (probability 0).
    pub fn softmax(&mut self, a: NodeId, blocked: Option<&[bool]>) -> Result<NodeId> {
        let ta = self.value(a);
        if let Some(mask) = blocked {
            if mask.len() != ta.len() {
                return Err(TensorError::BadMask);
            }
        }
        let cols = ta.cols();
        let mut out = Tensor::matrix(ta.rows(), cols, vec![T::zero(); ta.len()])?;
        for r in 0..ta.rows() {
            let row = ta.row(r);
            let keep = |c: usize| blocked.is_none_or(|m| !m[r * cols + c]);
            let mut max = T::neg_infinity();
            for (c, &v) in row.iter().enumerate() {
                if keep(c) && v > max {
                    max = v;
                }
            }
            if max == T::neg_infinity() {
                return Err(TensorError::BadMask);
            }
            let o = out.row_mut(r);
            let mut sum = T::zero();
            for c in 0..cols {
                if keep(c) {
                    o[c] = (row[c] - max).exp();
                    sum += o[c];
                }
            }
            for v in o.iter_mut() {
                *v /= sum;
            }
        }
        let out = finite(out, "softmax")?;
        Ok(self.push(out, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        let mut out = Tensor::matrix(ta.rows(), ta.cols(), ta.data().to_vec())?;
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = finite(out, "log_softmax")?;
        Ok(self.push(out, Op::LogSoftmax(a)))
    }

    /// Normalize each row to zero mean / unit variance, then `γ·x̂ + β`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: T) -> Result<NodeId> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let cols = tx.cols();
        if tg.len() != cols || tb.len() != cols {
            return Err(mismatch("layer_norm", tx.shape(), tg.shape()));
        }
        let n = T::from_usize(cols).unwrap();
        let mut xhat = vec![T::zero(); tx.len()];
        let mut inv_std = vec![T::zero(); tx.rows()];
        let mut out = vec![T::zero(); tx.len()];
        for r in 0..tx.rows() {
            let row = tx.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * tg.data()[c] + tb.data()[c];
            }
        }
        let out = finite(Tensor::matrix(tx.rows(), cols, out)?, "layer_norm")?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Inverted dropout; identity in evaluation mode or for `p == 0`.
    pub fn dropout(&mut self, a: NodeId, p: f64) -> Result<NodeId> {
        let Some(rng) = self.rng.as_mut() else {
            return Ok(a);
        };
        if p <= 0.0 {
            return Ok(a);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let ta = match &self.nodes[a.0].value {
            Value::Owned(t) => t,
            Value::Param(pid) => self.params.unwrap().get(*pid),
        };
        let mask: Vec<T> = (0..ta.len())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = ta.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::matrix(ta.rows(), ta.cols(), data)?;
        Ok(self.push(out, Op::Dropout(a, mask)))
    }

    /// Gather rows of `table` (`[V, D]`) by `ids`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let tt = self.value(table);
        let (v, d) = dims(tt);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= v {
                return Err(TensorError::IndexOutOfRange { index: i, bound: v });
            }
            data.extend_from_slice(tt.row(i));
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(out, Op::Embedding(table, ids.to_vec())))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(mismatch("slice_cols", ta.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(ta.rows(), len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]).shape(), t.shape()));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let ta = self.value(a);
        if start + len > ta.rows() {
            return Err(mismatch("slice_rows", ta.shape(), &[start, len]));
        }
        let c = ta.cols();
        let out = Tensor::matrix(len, c, ta.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", self.value(parts[0]).shape(), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Repeat row `i` of `a` `counts[i]` times, preserving order.
    pub fn repeat_rows(&mut self, a: NodeId, counts: &[usize]) -> Result<NodeId> {
        let ta = self.value(a);
        if counts.len() != ta.rows() {
            return Err(mismatch("repeat_rows", ta.shape(), &[counts.len()]));
        }
        let total: usize = counts.iter().sum();
        let mut data = Vec::with_capacity(total * ta.cols());
        for (r, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                data.extend_from_slice(ta.row(r));
            }
        }
        let out = Tensor::matrix(total, ta.cols(), data)?;
        Ok(self.push(out, Op::RepeatRows(a, counts.to_vec())))
    }

    /// Same-length 1-D convolution over time.
    ///
    /// `x` is `[T, C_in]`, `w` is `[kernel * C_in, C_out]` with tap `j` of
    /// input channel `c` at row `j * C_in + c`, `b` is `[1, C_out]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, kernel: usize) -> Result<NodeId> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (frames, cin) = dims(tx);
        if kernel.is_multiple_of(2) || tw.rows() != kernel * cin || tb.len() != tw.cols() {
            return Err(mismatch("conv1d", tx.shape(), tw.shape()));
        }
        let pad = kernel / 2;
        let width = kernel * cin;
        let mut cols = vec![T::zero(); frames * width];
        for t in 0..frames {
            for j in 0..kernel {
                let src = t as isize + j as isize - pad as isize;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let dst = &mut cols[t * width + j * cin..t * width + (j + 1) * cin];
                dst.copy_from_slice(tx.row(src as usize));
            }
        }
        let cols = Tensor::matrix(frames, width, cols)?;
        let cout = tw.cols();
        let mut out = vec![T::zero(); frames * cout];
        for t in 0..frames {
            out[t * cout..(t + 1) * cout].copy_from_slice(tb.data());
        }
        matmul_into(&cols, false, tw, false, &mut out, true);
        let out = finite(Tensor::matrix(frames, cout, out)?, "conv1d")?;
        Ok(self.push(out, Op::Conv1d { x, w, b, kernel, cols }))
    }

    /// Mean negative log-softmax of `targets` over rows whose target is not `pad`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], pad: Option<usize>) -> Result<NodeId> {
        let tl = self.value(logits);
        let (rows, v) = dims(tl);
        if targets.len() != rows {
            return Err(mismatch("cross_entropy", tl.shape(), &[targets.len()]));
        }
        let mut probs = Tensor::matrix(rows, v, vec![T::zero(); rows * v])?;
        let mut total = T::zero();
        let mut count = 0;
        for (r, &y) in targets.iter().enumerate().take(rows) {
            if y >= v {
                return Err(TensorError::IndexOutOfRange { index: y, bound: v });
            }
            let row = tl.row(r);
            let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
            let lse = max + sum.ln();
            for (p, &x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
            if Some(y) != pad {
                total += lse - row[y];
                count += 1;
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::from_usize(count).unwrap()
        };
        let out = finite(Tensor::scalar(loss), "cross_entropy")?;
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
                pad,
                count,
            },
        ))
    }

    /// `mean|Δ| + mean(Δ²)` over rows with `row_mask[r]` set, `Δ = pred − target`.
    pub fn l1_l2(&mut self, pred: NodeId, target: &Tensor<T>, row_mask: &[bool]) -> Result<NodeId> {
        let tp = self.value(pred);
        if dims(tp) != dims(target) || row_mask.len() != tp.rows() {
            return Err(mismatch("l1_l2", tp.shape(), target.shape()));
        }
        let cols = tp.cols();
        let mut diff = Tensor::zeros(&[tp.rows(), cols]);
        let (mut l1, mut l2) = (T::zero(), T::zero());
        let mut count = 0;
        for (r, &keep) in row_mask.iter().enumerate().take(tp.rows()) {
            if !keep {
                continue;
            }
            count += cols;
            for c in 0..cols {
                let d = tp.at(r, c) - target.at(r, c);
                diff.set(r, c, d);
                l1 += d.abs();
                l2 += d * d;
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            (l1 + l2) / T::from_usize(count).unwrap()
        };
        let out = finite(Tensor::scalar(loss), "l1_l2")?;
        Ok(self.push(
            out,
            Op::L1L2 {
                pred,
                diff,
                row_mask: row_mask.to_vec(),
                count,
            },
        ))
    }

    /// CTC negative log-likelihood of `target` given frame log-probabilities.
    pub fn ctc(&mut self, logprobs: NodeId, target: &[usize], blank: usize) -> Result<NodeId> {
        let (loss, grad) = ctc::ctc_loss_and_grad(self.value(logprobs), target, blank)?;
        let out = finite(Tensor::scalar(loss), "ctc")?;
        Ok(self.push(out, Op::Ctc(logprobs, grad)))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s: T = self.value(a).data().iter().copied().sum();
        let out = finite(Tensor::scalar(s), "sum")?;
        Ok(self.push(out, Op::Sum(a)))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        let s: T = ta.data().iter().copied().sum::<T>() / T::from_usize(ta.len().max(1)).unwrap();
        let out = finite(Tensor::scalar(s), "mean")?;
        Ok(self.push(out, Op::Mean(a)))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let tl = self.value(loss);
        if tl.len() != 1 {
            return Err(mismatch("backward", tl.shape(), &[1, 1]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(tl.shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let out = Gradients { grads };
        if out.grads.iter().flatten().all(Tensor::is_finite) {
            Ok(out)
        } else {
            Err(TensorError::NonFinite { op: "backward" })
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let out = self.value(NodeId(i));
        match &self.nodes[i].op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                matmul_into(g, false, tb, true, acc(grads, *a, ta).data_mut(), true);
                matmul_into(ta, true, g, false, acc(grads, *b, tb).data_mut(), true);
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                matmul_into(g, false, tb, false, acc(grads, *a, ta).data_mut(), true);
                matmul_into(g, true, ta, false, acc(grads, *b, tb).data_mut(), true);
            }
            Op::Add(a, b) => {
                acc(grads, *a, self.value(*a)).add_assign(g);
                acc(grads, *b, self.value(*b)).add_assign(g);
            }
            Op::AddRow(a, row) => {
                acc(grads, *a, self.value(*a)).add_assign(g);
                let gr = acc(grads, *row, self.value(*row));
                for r in 0..g.rows() {
                    for (x, &y) in gr.data_mut().iter_mut().zip(g.row(r)) {
                        *x += y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = acc(grads, *a, ta);
                for ((x, &d), &y) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                    *x += d * y;
                }
                let gb = acc(grads, *b, tb);
                for ((x, &d), &y) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                    *x += d * y;
                }
            }
            Op::Scale(a, s) => {
                let ga = acc(grads, *a, self.value(*a));
                for (x, &d) in ga.data_mut().iter_mut().zip(g.data()) {
                    *x += d * *s;
                }
            }
            Op::Relu(a) => {
                let ga = acc(grads, *a, self.value(*a));
                for ((x, &d), &y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                    if y > T::zero() {
                        *x += d;
                    }
                }
            }
            Op::Tanh(a) => {
                let ga = acc(grads, *a, self.value(*a));
                for ((x, &d), &y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                    *x += d * (T::one() - y * y);
                }
            }
            Op::Sigmoid(a) => {
                let ga = acc(grads, *a, self.value(*a));
                for ((x, &d), &y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                    *x += d * y * (T::one() - y);
                }
            }
            Op::Softmax(a) => {
                let ga = acc(grads, *a, self.value(*a));
                for r in 0..out.rows() {
                    let (y, d) = (out.row(r), g.row(r));
                    let dot: T = y.iter().zip(d).map(|(&p, &q)| p * q).sum();
                    for ((x, &p), &q) in ga.row_mut(r).iter_mut().zip(y).zip(d) {
                        *x += p * (q - dot);
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let ga = acc(grads, *a, self.value(*a));
                for r in 0..out.rows() {
                    let (y, d) = (out.row(r), g.row(r));
                    let total: T = d.iter().copied().sum();
                    for ((x, &l), &q) in ga.row_mut(r).iter_mut().zip(y).zip(d) {
                        *x += q - l.exp() * total;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let tg = self.value(*gamma);
                let cols = tg.len();
                let n = T::from_usize(cols).unwrap();
                {
                    let gg = acc(grads, *gamma, tg);
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            gg.data_mut()[c] += g.at(r, c) * xhat[r * cols + c];
                        }
                    }
                }
                {
                    let gb = acc(grads, *beta, self.value(*beta));
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            gb.data_mut()[c] += g.at(r, c);
                        }
                    }
                }
                let gx = acc(grads, *x, self.value(*x));
                let mut dxhat = vec![T::zero(); cols];
                for r in 0..g.rows() {
                    let h = &xhat[r * cols..(r + 1) * cols];
                    for (c, (d, &gamma)) in dxhat.iter_mut().zip(tg.data()).enumerate() {
                        *d = g.at(r, c) * gamma;
                    }
                    let s1: T = dxhat.iter().copied().sum();
                    let s2: T = dxhat.iter().zip(h).map(|(&a, &b)| a * b).sum();
                    let k = inv_std[r] / n;
                    for (c, v) in gx.row_mut(r).iter_mut().enumerate() {
                        *v += k * (n * dxhat[c] - s1 - h[c] * s2);
                    }
                }
            }
            Op::Dropout(a, mask) => {
                let ga = acc(grads, *a, self.value(*a));
                for ((x, &d), &m) in ga.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *x += d * m;
                }
            }
            Op::Embedding(table, ids) => {
                let gt = acc(grads, *table, self.value(*table));
                for (r, &id) in ids.iter().enumerate() {
                    for (x, &d) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *x += d;
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let ga = acc(grads, *a, self.value(*a));
                let len = g.cols();
                for r in 0..g.rows() {
                    for (x, &d) in ga.row_mut(r)[*start..*start + len].iter_mut().zip(g.row(r)) {
                        *x += d;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let w = tp.cols();
                    let gp = acc(grads, p, tp);
                    for r in 0..g.rows() {
                        for (x, &d) in gp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + w]) {
                            *x += d;
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceRows(a, start) => {
                let ga = acc(grads, *a, self.value(*a));
                let c = g.cols();
                for (x, &d) in ga.data_mut()[start * c..start * c + g.len()].iter_mut().zip(g.data()) {
                    *x += d;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let n = tp.len();
                    let gp = acc(grads, p, tp);
                    for (x, &d) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + n]) {
                        *x += d;
                    }
                    offset += n;
                }
            }
            Op::RepeatRows(a, counts) => {
                let ga = acc(grads, *a, self.value(*a));
                let mut src = 0;
                for (r, &n) in counts.iter().enumerate() {
                    for _ in 0..n {
                        for (x, &d) in ga.row_mut(r).iter_mut().zip(g.row(src)) {
                            *x += d;
                        }
                        src += 1;
                    }
                }
            }
            Op::Conv1d { x, w, b, kernel, cols } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                matmul_into(cols, true, g, false, acc(grads, *w, tw).data_mut(), true);
                {
                    let gb = acc(grads, *b, self.value(*b));
                    for r in 0..g.rows() {
                        for (v, &d) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *v += d;
                        }
                    }
                }
                let frames = tx.rows();
                let cin = tx.cols();
                let width = kernel * cin;
                let mut dcols = vec![T::zero(); frames * width];
                matmul_into(g, false, tw, true, &mut dcols, false);
                let pad = kernel / 2;
                let gx = acc(grads, *x, tx);
                for t in 0..frames {
                    for j in 0..*kernel {
                        let src = t as isize + j as isize - pad as isize;
                        if src < 0 || src >= frames as isize {
                            continue;
                        }
                        let from = &dcols[t * width + j * cin..t * width + (j + 1) * cin];
                        for (v, &d) in gx.row_mut(src as usize).iter_mut().zip(from) {
                            *v += d;
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                probs,
                targets,
                pad,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let scale = g.item() / T::from_usize(*count).unwrap();
                let gl = acc(grads, *logits, self.value(*logits));
                for (r, &y) in targets.iter().enumerate() {
                    if Some(y) == *pad {
                        continue;
                    }
                    let row = gl.row_mut(r);
                    for (c, (x, &p)) in row.iter_mut().zip(probs.row(r)).enumerate() {
                        let onehot = if c == y { T::one() } else { T::zero() };
                        *x += scale * (p - onehot);
                    }
                }
            }
            Op::L1L2 {
                pred,
                diff,
                row_mask,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let scale = g.item() / T::from_usize(*count).unwrap();
                let two = T::lit(2.0);
                let gp = acc(grads, *pred, self.value(*pred));
                for (r, &keep) in row_mask.iter().enumerate().take(diff.rows()) {
                    if !keep {
                        continue;
                    }
                    for (x, &d) in gp.row_mut(r).iter_mut().zip(diff.row(r)) {
                        let sign = if d > T::zero() {
                            T::one()
                        } else if d < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        *x += scale * (sign + two * d);
                    }
                }
            }
            Op::Ctc(lp, cg) => {
                let s = g.item();
                let gl = acc(grads, *lp, self.value(*lp));
                for (x, &d) in gl.data_mut().iter_mut().zip(cg.data()) {
                    *x += s * d;
                }
            }
            Op::Sum(a) => {
                let s = g.item();
                let ga = acc(grads, *a, self.value(*a));
                ga.data_mut().iter_mut().for_each(|x| *x += s);
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                let s = g.item() / T::from_usize(ta.len().max(1)).unwrap();
                let ga = acc(grads, *a, ta);
                ga.data_mut().iter_mut().for_each(|x| *x += s);
            }
        }
    }
}

fn acc<'g, T: Scalar>(grads: &'g mut [Option<Tensor<T>>], id: NodeId, like: &Tensor<T>) -> &'g mut Tensor<T> {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(&[like.rows(), like.cols()]))
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `id`, `None` when the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Add every parameter node's gradient into `store`.
    pub fn accumulate_into(&self, graph: &Graph<'_, T>, store: &mut GradStore<T>) {
        for (&pid, &node) in &graph.param_nodes {
            if let Some(g) = self.get(node) {
                let dst = store.get_mut(pid);
                for (x, &d) in dst.data_mut().iter_mut().zip(g.data()) {
                    *x += d;
                }
            }
        }
    }
}
