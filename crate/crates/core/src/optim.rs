//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::nn::{Bound, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// `base · ½(1 + cos(π·step/total))`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total)) as f64 / total as f64;
    base * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
}

pub struct AdamW {
    pub cfg: AdamWConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore<f32>) -> Self {
        let zeros = || {
            store
                .params()
                .iter()
                .map(|p| vec![0.0f32; p.value.numel()])
                .collect()
        };
        Self {
            cfg,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Update every parameter whose bound leaf received a gradient.
    /// Decay applies to matrices and kernels only, not to vectors.
    pub fn step(&mut self, store: &mut ParamStore<f32>, bound: &Bound, g: &Graph<f32>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - libm::pow(b1, self.t as f64);
        let c2 = 1.0 - libm::pow(b2, self.t as f64);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(grad) = g.grad(bound[id]) else {
                continue;
            };
            let decay = store.get(id).ndim() >= 2;
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = grad.data()[i] as f64;
                let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let mut x = p[i] as f64;
                if decay {
                    x -= lr * self.cfg.weight_decay * x;
                }
                x -= lr * (mi / c1) / (libm::sqrt(vi / c2) + self.cfg.eps);
                p[i] = x as f32;
            }
        }
    }
}
