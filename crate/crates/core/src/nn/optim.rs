use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::params::{GradStore, ParamStore};
use super::tensor::Tensor;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplicative learning-rate decay applied every `decay_every` epochs.
    pub decay_gamma: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-scale schedule: Adam(1e-4, 0.9, 0.98, 1e-9), ×0.1 every 10 epochs,
    /// batches of 64 for 30 epochs.
    pub fn full() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            decay_gamma: 0.1,
            decay_every: 10,
            batch_size: 64,
            epochs: 30,
            seed: 0,
        }
    }

    /// Desk-scale schedule for the small model: same optimizer family with a
    /// larger step and smaller batches so a few hundred words train quickly.
    pub fn desk() -> Self {
        Self {
            lr: 2e-3,
            decay_gamma: 0.5,
            decay_every: 40,
            batch_size: 8,
            epochs: 60,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err("lr must be positive".into());
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err("betas must lie in (0, 1)".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err("eps must be positive".into());
        }
        if !(self.decay_gamma > 0.0 && self.decay_gamma <= 1.0) {
            return Err("decay_gamma must lie in (0, 1]".into());
        }
        if self.decay_every == 0 || self.batch_size == 0 {
            return Err("decay_every and batch_size must be at least 1".into());
        }
        Ok(())
    }

    /// Step-decayed learning rate for a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay_gamma.powi((epoch / self.decay_every) as i32)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Per-parameter first/second moments.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<_> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update at learning rate `lr`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &GradStore<T>, cfg: &TrainConfig, lr: f64) {
        assert_eq!(self.m.len(), params.len(), "optimizer state does not match parameters");
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (b1t, b2t) = (T::lit(b1), T::lit(b2));
        let (one_b1, one_b2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
        let (c1t, c2t) = (T::lit(c1), T::lit(c2));
        let (lrt, epst) = (T::lit(lr), T::lit(cfg.eps));
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get(id).data();
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = b1t * m[i] + one_b1 * g[i];
                v[i] = b2t * v[i] + one_b2 * g[i] * g[i];
                let mhat = m[i] / c1t;
                let vhat = v[i] / c2t;
                p[i] -= lrt * mhat / (vhat.sqrt() + epst);
            }
        }
    }
}
