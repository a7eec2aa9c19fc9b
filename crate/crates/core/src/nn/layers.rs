//! Parameterized building blocks over [`Graph`].

use rand::Rng;

use crate::scalar::Scalar;

use super::error::{Result, TensorError};
use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Affine map `x·W + b`, `W` is `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            w: store.add_glorot(format!("{name}.w"), fan_in, fan_out, rng),
            b: store.add_const(format!("{name}.b"), &[1, fan_out], 0.0),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let h = g.matmul(x, w)?;
        g.add_row(h, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add_const(format!("{name}.gamma"), &[1, dim], 1.0),
            beta: store.add_const(format!("{name}.beta"), &[1, dim], 0.0),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, T::lit(Self::EPS))
    }
}

/// Blocked-entry mask for causal self-attention over `len` positions.
pub fn causal_mask(len: usize) -> Vec<bool> {
    let mut mask = vec![false; len * len];
    for i in 0..len {
        for j in i + 1..len {
            mask[i * len + j] = true;
        }
    }
    mask
}

/// Scaled dot-product attention split over `heads` column groups.
///
/// `q` is `[Lq, D]`, `k` and `v` are `[Lk, D]`; `blocked` (if given) is a
/// row-major `[Lq, Lk]` mask of excluded positions shared by all heads.
pub fn multi_head_attention<T: Scalar>(
    g: &mut Graph<'_, T>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    heads: usize,
    blocked: Option<&[bool]>,
) -> Result<NodeId> {
    let (lq, dim) = (g.value(q).rows(), g.value(q).cols());
    let lk = g.value(k).rows();
    if heads == 0 || dim % heads != 0 || g.value(k).cols() != dim || g.value(v).shape() != g.value(k).shape() {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            left: g.value(q).shape().to_vec(),
            right: g.value(k).shape().to_vec(),
        });
    }
    if let Some(m) = blocked {
        if m.len() != lq * lk {
            return Err(TensorError::BadMask);
        }
    }
    let hd = dim / heads;
    let scale = T::lit(1.0 / (hd as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * hd, hd)?,
                g.slice_cols(k, h * hd, hd)?,
                g.slice_cols(v, h * hd, hd)?,
            )
        };
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale)?;
        let weights = g.softmax(scores, blocked)?;
        outs.push(g.matmul(weights, vh)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        g.concat_cols(&outs)
    }
}

/// Projected multi-head attention block.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            o: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        query: NodeId,
        memory: NodeId,
        blocked: Option<&[bool]>,
    ) -> Result<NodeId> {
        let q = self.q.forward(g, query)?;
        let k = self.k.forward(g, memory)?;
        let v = self.v.forward(g, memory)?;
        let ctx = multi_head_attention(g, q, k, v, self.heads, blocked)?;
        self.o.forward(g, ctx)
    }
}

/// Position-wise `Linear → ReLU → Linear`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), dim, hidden, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, dim, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId, dropout: f64) -> Result<NodeId> {
        let h = self.l1.forward(g, x)?;
        let h = g.relu(h)?;
        let h = g.dropout(h, dropout)?;
        self.l2.forward(g, h)
    }
}

/// Same-length convolution layer, weight `[kernel·C_in, C_out]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(kernel % 2 == 1, "conv kernels must be odd");
        Self {
            w: store.add_glorot(format!("{name}.w"), kernel * cin, cout, rng),
            b: store.add_const(format!("{name}.b"), &[1, cout], 0.0),
            kernel,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.conv1d(x, w, b, self.kernel)
    }
}

/// Single-layer LSTM over the rows of its input.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let wx = store.add_glorot(format!("{name}.wx"), input, 4 * hidden, rng);
        let wh = store.add_glorot(format!("{name}.wh"), hidden, 4 * hidden, rng);
        // gate order i, f, g, o; forget gate starts open
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = store.add(format!("{name}.b"), Tensor::from_f64(&[1, 4 * hidden], &bias).unwrap());
        Self { wx, wh, b, hidden }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let frames = g.value(x).rows();
        let hsz = self.hidden;
        let wx = g.param(self.wx);
        let wh = g.param(self.wh);
        let b = g.param(self.b);
        let xs = g.matmul(x, wx)?;
        let xs = g.add_row(xs, b)?;
        let mut h = g.input(Tensor::zeros(&[1, hsz]));
        let mut c = g.input(Tensor::zeros(&[1, hsz]));
        let mut outs = Vec::with_capacity(frames);
        for t in 0..frames {
            let xt = g.slice_rows(xs, t, 1)?;
            let rec = g.matmul(h, wh)?;
            let z = g.add(xt, rec)?;
            let i = g.slice_cols(z, 0, hsz)?;
            let i = g.sigmoid(i)?;
            let f = g.slice_cols(z, hsz, hsz)?;
            let f = g.sigmoid(f)?;
            let cand = g.slice_cols(z, 2 * hsz, hsz)?;
            let cand = g.tanh(cand)?;
            let o = g.slice_cols(z, 3 * hsz, hsz)?;
            let o = g.sigmoid(o)?;
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            c = g.add(keep, write)?;
            let tc = g.tanh(c)?;
            h = g.mul(o, tc)?;
            outs.push(h);
        }
        g.concat_rows(&outs)
    }
}

/// Fixed sinusoidal position table `[len, dim]`.
pub fn sinusoidal_positions<T: Scalar>(len: usize, dim: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            data[pos * dim + i] = T::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(len, dim, data).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_mask_shape() {
        assert_eq!(
            causal_mask(3),
            vec![false, true, true, false, false, true, false, false, false]
        );
    }

    #[test]
    fn single_position_attends_fully() {
        let mut g = Graph::<f64>::standalone();
        let q = g.input(Tensor::from_f64(&[1, 4], &[0.3, -1.0, 2.0, 0.1]).unwrap());
        let k = g.input(Tensor::from_f64(&[1, 4], &[1.0, 1.0, 1.0, 1.0]).unwrap());
        let v = g.input(Tensor::from_f64(&[1, 4], &[5.0, 6.0, 7.0, 8.0]).unwrap());
        let out = multi_head_attention(&mut g, q, k, v, 2, None).unwrap();
        assert_eq!(g.value(out).data(), &[5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn two_heads_by_hand() {
        // head 0 uses columns 0..2, head 1 columns 2..4; scale 1/sqrt(2)
        let mut g = Graph::<f64>::standalone();
        let q = g.input(Tensor::from_f64(&[2, 4], &[1., 0., 0., 1., 0., 1., 1., 0.]).unwrap());
        let k = g.input(Tensor::from_f64(&[2, 4], &[1., 0., 0., 2., 0., 1., 2., 0.]).unwrap());
        let v = g.input(Tensor::from_f64(&[2, 4], &[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap());
        let out = multi_head_attention(&mut g, q, k, v, 2, None).unwrap();
        let s = 1.0 / 2f64.sqrt();
        // head 0, row 0: scores [1, 0]·s ; row 1: [0, 1]·s
        let w_hi = (s).exp() / ((s).exp() + 1.0);
        let w_lo = 1.0 - w_hi;
        // head 1, row 0: q=[0,1], k rows [0,2],[2,0] -> scores [2s, 0]; row 1: q=[1,0] -> [0, 2s]
        let u_hi = (2.0 * s).exp() / ((2.0 * s).exp() + 1.0);
        let u_lo = 1.0 - u_hi;
        let expected = [
            w_hi * 1. + w_lo * 5.,
            w_hi * 2. + w_lo * 6.,
            u_hi * 3. + u_lo * 7.,
            u_hi * 4. + u_lo * 8.,
            w_lo * 1. + w_hi * 5.,
            w_lo * 2. + w_hi * 6.,
            u_lo * 3. + u_hi * 7.,
            u_lo * 4. + u_hi * 8.,
        ];
        for (a, b) in g.value(out).data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn causal_attention_ignores_future() {
        let run = |third: f64| {
            let mut g = Graph::<f64>::standalone();
            let x = g.input(Tensor::from_f64(&[3, 2], &[0.1, 0.2, -0.3, 0.4, third, 1.0]).unwrap());
            let mask = causal_mask(3);
            let out = multi_head_attention(&mut g, x, x, x, 1, Some(&mask)).unwrap();
            g.value(out).row(1).to_vec()
        };
        assert_eq!(run(0.5), run(-7.0));
    }

    #[test]
    fn head_count_must_divide_dim() {
        let mut g = Graph::<f64>::standalone();
        let x = g.input(Tensor::zeros(&[2, 3]));
        assert!(multi_head_attention(&mut g, x, x, x, 2, None).is_err());
    }

    #[test]
    fn positions_alternate_sin_cos() {
        let pe = sinusoidal_positions::<f64>(2, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe.at(1, 0) - 1f64.sin()).abs() < 1e-15);
        assert!((pe.at(1, 3) - (0.01f64).cos()).abs() < 1e-15);
    }
}
