//! Central finite-difference verification of the tape's gradients.
//!
//! A case is a parameter store, a set of input tensors and a function that
//! builds a graph from them. Non-scalar outputs are reduced with fixed random
//! weights so every output element contributes a distinct upstream gradient.
//! The error of one tensor is `‖a − n‖₂ / max(‖a‖₂ + ‖n‖₂, NORM_FLOOR)`; the
//! floor keeps gradients that vanish identically (a key bias under softmax,
//! say) from being judged on finite-difference roundoff alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::error::Result;
use super::graph::{Graph, NodeId};
use super::layers::{
    causal_mask, multi_head_attention, Conv1d, FeedForward, LayerNorm, Linear, Lstm, MultiHeadAttention,
};
use super::params::ParamStore;
use super::tensor::Tensor;

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Pass threshold on relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Gradient norms below this are at the resolution of the difference quotient.
pub const NORM_FLOOR: f64 = 1e-6;

type Build = dyn Fn(&mut Graph<'_, f64>, &[NodeId]) -> Result<NodeId>;

/// One gradient-check problem.
pub struct GradCase {
    pub params: ParamStore<f64>,
    pub inputs: Vec<Tensor<f64>>,
    /// Seed for training-mode dropout masks; the same mask is redrawn on
    /// every evaluation.
    pub dropout_seed: Option<u64>,
    pub build: Box<Build>,
}

impl GradCase {
    pub fn new(
        inputs: Vec<Tensor<f64>>,
        build: impl Fn(&mut Graph<'_, f64>, &[NodeId]) -> Result<NodeId> + 'static,
    ) -> Self {
        Self {
            params: ParamStore::new(),
            inputs,
            dropout_seed: None,
            build: Box::new(build),
        }
    }

    pub fn with_params(mut self, params: ParamStore<f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_dropout(mut self, seed: u64) -> Self {
        self.dropout_seed = Some(seed);
        self
    }

    fn graph<'p>(&self, params: &'p ParamStore<f64>) -> Graph<'p, f64> {
        let g = Graph::new(params);
        match self.dropout_seed {
            Some(s) => g.with_dropout_rng(ChaCha8Rng::seed_from_u64(s)),
            None => g,
        }
    }

    /// Build the graph and reduce to a scalar loss node.
    fn forward<'p>(
        &self,
        params: &'p ParamStore<f64>,
        inputs: &[Tensor<f64>],
    ) -> Result<(Graph<'p, f64>, Vec<NodeId>, NodeId)> {
        let mut g = self.graph(params);
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let out = (self.build)(&mut g, &ids)?;
        let shape = g.value(out).shape().to_vec();
        let loss = if shape.iter().product::<usize>() == 1 {
            out
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
            let n = g.value(out).len();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = g.input(Tensor::new(shape, w)?);
            let p = g.mul(out, w)?;
            g.sum(p)?
        };
        Ok((g, ids, loss))
    }

    fn loss_value(&self, params: &ParamStore<f64>, inputs: &[Tensor<f64>]) -> Result<f64> {
        let (g, _, loss) = self.forward(params, inputs)?;
        Ok(g.value(loss).item())
    }

    /// Largest relative error over every input and parameter tensor.
    pub fn max_relative_error(&self) -> Result<f64> {
        let (g, ids, loss) = self.forward(&self.params, &self.inputs)?;
        let grads = g.backward(loss)?;
        let mut worst: f64 = 0.0;
        for (k, id) in ids.iter().enumerate() {
            let analytic = grads
                .get(*id)
                .map_or_else(|| vec![0.0; self.inputs[k].len()], |t| t.data().to_vec());
            let mut numeric = Vec::with_capacity(analytic.len());
            for i in 0..self.inputs[k].len() {
                let mut plus = self.inputs.clone();
                plus[k].data_mut()[i] += STEP;
                let mut minus = self.inputs.clone();
                minus[k].data_mut()[i] -= STEP;
                numeric.push(
                    (self.loss_value(&self.params, &plus)? - self.loss_value(&self.params, &minus)?) / (2.0 * STEP),
                );
            }
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        let mut store = self.params.zeros_like();
        grads.accumulate_into(&g, &mut store);
        for pid in self.params.ids() {
            let analytic = store.get(pid).data().to_vec();
            let mut numeric = Vec::with_capacity(analytic.len());
            for i in 0..analytic.len() {
                let mut plus = self.params.clone();
                plus.get_mut(pid).data_mut()[i] += STEP;
                let mut minus = self.params.clone();
                minus.get_mut(pid).data_mut()[i] -= STEP;
                numeric.push(
                    (self.loss_value(&plus, &self.inputs)? - self.loss_value(&minus, &self.inputs)?) / (2.0 * STEP),
                );
            }
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        Ok(worst)
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(NORM_FLOOR)
}

fn dim(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let v = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Tensor::matrix(rows, cols, v).expect("shape")
}

/// Entries bounded away from zero, for ops with a kink there.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let v = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, v).expect("shape")
}

/// Names of the operations covered by [`op_case`].
pub const OPS: &[&str] = &[
    "matmul",
    "matmul_nt",
    "add",
    "add_row",
    "mul",
    "scale",
    "relu",
    "tanh",
    "sigmoid",
    "softmax",
    "softmax_masked",
    "log_softmax",
    "layer_norm",
    "dropout",
    "embedding",
    "slice_cols",
    "concat_cols",
    "slice_rows",
    "concat_rows",
    "repeat_rows",
    "conv1d",
    "cross_entropy",
    "l1_l2",
    "ctc",
    "sum",
    "mean",
    "attention",
    "linear_layer",
    "layer_norm_layer",
    "feed_forward",
    "conv_layer",
    "mha_layer",
    "lstm",
];

/// A randomized case for `op`, shapes drawn from `rng`.
pub fn op_case(op: &str, rng: &mut ChaCha8Rng) -> GradCase {
    let (r, c) = (dim(rng, 1, 5), dim(rng, 1, 5));
    match op {
        "matmul" => {
            let k = dim(rng, 1, 5);
            GradCase::new(vec![randn(rng, r, k), randn(rng, k, c)], |g, x| g.matmul(x[0], x[1]))
        }
        "matmul_nt" => {
            let k = dim(rng, 1, 5);
            GradCase::new(vec![randn(rng, r, k), randn(rng, c, k)], |g, x| g.matmul_nt(x[0], x[1]))
        }
        "add" => GradCase::new(vec![randn(rng, r, c), randn(rng, r, c)], |g, x| g.add(x[0], x[1])),
        "add_row" => GradCase::new(vec![randn(rng, r, c), randn(rng, 1, c)], |g, x| g.add_row(x[0], x[1])),
        "mul" => GradCase::new(vec![randn(rng, r, c), randn(rng, r, c)], |g, x| g.mul(x[0], x[1])),
        "scale" => {
            let s = rng.gen_range(-2.0..2.0);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| g.scale(x[0], s))
        }
        "relu" => GradCase::new(vec![away_from_zero(rng, r, c)], |g, x| g.relu(x[0])),
        "tanh" => GradCase::new(vec![randn(rng, r, c)], |g, x| g.tanh(x[0])),
        "sigmoid" => GradCase::new(vec![randn(rng, r, c)], |g, x| g.sigmoid(x[0])),
        "softmax" => GradCase::new(vec![randn(rng, r, c)], |g, x| g.softmax(x[0], None)),
        "softmax_masked" => {
            let c = c.max(2);
            let mut mask: Vec<bool> = (0..r * c).map(|_| rng.gen_bool(0.3)).collect();
            for row in 0..r {
                mask[row * c + rng.gen_range(0..c)] = false;
            }
            GradCase::new(vec![randn(rng, r, c)], move |g, x| g.softmax(x[0], Some(&mask)))
        }
        "log_softmax" => GradCase::new(vec![randn(rng, r, c)], |g, x| g.log_softmax(x[0])),
        "layer_norm" => {
            let c = c.max(2);
            GradCase::new(vec![randn(rng, r, c), randn(rng, 1, c), randn(rng, 1, c)], |g, x| {
                g.layer_norm(x[0], x[1], x[2], 1e-5)
            })
        }
        "dropout" => {
            let p = rng.gen_range(0.1..0.6);
            let seed = rng.gen();
            GradCase::new(vec![randn(rng, r, c)], move |g, x| {
                let h = g.tanh(x[0])?;
                g.dropout(h, p)
            })
            .with_dropout(seed)
        }
        "embedding" => {
            let v = dim(rng, 2, 6);
            let ids: Vec<usize> = (0..dim(rng, 1, 6)).map(|_| rng.gen_range(0..v)).collect();
            GradCase::new(vec![randn(rng, v, c)], move |g, x| g.embedding(x[0], &ids))
        }
        "slice_cols" => {
            let c = c.max(2);
            let start = rng.gen_range(0..c);
            let len = rng.gen_range(1..=c - start);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| g.slice_cols(x[0], start, len))
        }
        "concat_cols" => {
            let c2 = dim(rng, 1, 4);
            GradCase::new(vec![randn(rng, r, c), randn(rng, r, c2)], |g, x| {
                g.concat_cols(&[x[0], x[1], x[0]])
            })
        }
        "slice_rows" => {
            let r = r.max(2);
            let start = rng.gen_range(0..r);
            let len = rng.gen_range(1..=r - start);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| g.slice_rows(x[0], start, len))
        }
        "concat_rows" => {
            let r2 = dim(rng, 1, 4);
            GradCase::new(vec![randn(rng, r, c), randn(rng, r2, c)], |g, x| {
                g.concat_rows(&[x[1], x[0], x[1]])
            })
        }
        "repeat_rows" => {
            let mut counts: Vec<usize> = (0..r).map(|_| rng.gen_range(0..4)).collect();
            counts[0] = counts[0].max(1);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| g.repeat_rows(x[0], &counts))
        }
        "conv1d" => {
            let kernel = [1, 3, 5][rng.gen_range(0..3)];
            let cout = dim(rng, 1, 4);
            GradCase::new(
                vec![randn(rng, r, c), randn(rng, kernel * c, cout), randn(rng, 1, cout)],
                move |g, x| g.conv1d(x[0], x[1], x[2], kernel),
            )
        }
        "cross_entropy" => {
            let c = c.max(2);
            let pad = rng.gen_bool(0.5).then_some(0);
            let mut targets: Vec<usize> = (0..r).map(|_| rng.gen_range(0..c)).collect();
            targets[0] = 1;
            GradCase::new(vec![randn(rng, r, c)], move |g, x| g.cross_entropy(x[0], &targets, pad))
        }
        "l1_l2" => {
            let pred = randn(rng, r, c);
            let offset = away_from_zero(rng, r, c);
            let mut target = pred.clone();
            for (t, o) in target.data_mut().iter_mut().zip(offset.data()) {
                *t += o;
            }
            let mut mask: Vec<bool> = (0..r).map(|_| rng.gen_bool(0.7)).collect();
            mask[0] = true;
            GradCase::new(vec![pred], move |g, x| g.l1_l2(x[0], &target, &mask))
        }
        "ctc" => {
            let v = dim(rng, 2, 4);
            let len = rng.gen_range(0..=3usize);
            let target: Vec<usize> = (0..len).map(|_| rng.gen_range(1..v)).collect();
            let frames = crate::nn::ctc::required_frames(&target).max(1) + rng.gen_range(0..3);
            GradCase::new(vec![randn(rng, frames, v)], move |g, x| {
                let lp = g.log_softmax(x[0])?;
                g.ctc(lp, &target, 0)
            })
        }
        "sum" => GradCase::new(vec![randn(rng, r, c)], |g, x| g.sum(x[0])),
        "mean" => GradCase::new(vec![randn(rng, r, c)], |g, x| g.mean(x[0])),
        "attention" => {
            let heads = dim(rng, 1, 2);
            let d = heads * dim(rng, 1, 3);
            let lk = dim(rng, 1, 4);
            let lq = if rng.gen_bool(0.5) { lk } else { dim(rng, 1, 4) };
            let mask = (lq == lk && rng.gen_bool(0.5)).then(|| causal_mask(lq));
            GradCase::new(
                vec![randn(rng, lq, d), randn(rng, lk, d), randn(rng, lk, d)],
                move |g, x| multi_head_attention(g, x[0], x[1], x[2], heads, mask.as_deref()),
            )
        }
        "linear_layer" => {
            let mut p = ParamStore::new();
            let l = Linear::new(&mut p, "l", c, dim(rng, 1, 4), rng);
            randomize(&mut p, rng);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| l.forward(g, x[0])).with_params(p)
        }
        "layer_norm_layer" => {
            let c = c.max(2);
            let mut p = ParamStore::new();
            let l = LayerNorm::new(&mut p, "ln", c);
            randomize(&mut p, rng);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| l.forward(g, x[0])).with_params(p)
        }
        "feed_forward" => {
            let mut p = ParamStore::new();
            let f = FeedForward::new(&mut p, "ff", c, dim(rng, 2, 6), rng);
            randomize(&mut p, rng);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| f.forward(g, x[0], 0.0)).with_params(p)
        }
        "conv_layer" => {
            let kernel = [1, 3][rng.gen_range(0..2)];
            let mut p = ParamStore::new();
            let l = Conv1d::new(&mut p, "cv", c, dim(rng, 1, 4), kernel, rng);
            randomize(&mut p, rng);
            GradCase::new(vec![randn(rng, r, c)], move |g, x| l.forward(g, x[0])).with_params(p)
        }
        "mha_layer" => {
            let heads = dim(rng, 1, 2);
            let d = heads * dim(rng, 1, 2);
            let mut p = ParamStore::new();
            let m = MultiHeadAttention::new(&mut p, "mha", d, heads, rng);
            randomize(&mut p, rng);
            let lk = dim(rng, 1, 3);
            GradCase::new(vec![randn(rng, r.min(3), d), randn(rng, lk, d)], move |g, x| {
                m.forward(g, x[0], x[1], None)
            })
            .with_params(p)
        }
        "lstm" => {
            let mut p = ParamStore::new();
            let l = Lstm::new(&mut p, "lstm", c.min(3), dim(rng, 1, 3), rng);
            randomize(&mut p, rng);
            GradCase::new(vec![randn(rng, r.min(4), c.min(3))], move |g, x| l.forward(g, x[0])).with_params(p)
        }
        other => panic!("no gradient case for {other:?}"),
    }
}

/// Replace constant initializations (zero biases, unit gains) with random
/// values so their gradients are exercised in general position.
fn randomize(p: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for id in p.ids().collect::<Vec<_>>() {
        for v in p.get_mut(id).data_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
    }
}

/// Worst relative error over `cases` random instances of `op`.
pub fn check_op(op: &str, cases: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        worst = worst.max(op_case(op, &mut rng).max_relative_error()?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_scale() {
        let a = [1.0, 2.0];
        let b = [1.0, 2.0 + 1e-3];
        assert!(relative_error(&a, &b) > 1e-4);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }
}
