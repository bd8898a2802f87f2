//! AdamW with decoupled weight decay.

use crate::error::{NumError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    /// First-moment accumulators, one per store entry.
    pub m: Vec<Tensor>,
    /// Second-moment accumulators, one per store entry.
    pub v: Vec<Tensor>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let m: Vec<Tensor> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamWState {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// One update. `grads[i]` belongs to the i-th store entry; `None`
    /// entries and frozen parameters are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(NumError::shape(
                "adamw",
                &[&[store.len()], &[grads.len()], &[self.m.len()]],
            ));
        }
        for ((p, g), m) in store.iter().zip(grads).zip(&self.m) {
            if let Some(g) = g {
                if g.shape() != p.value.shape() || m.shape() != p.value.shape() {
                    return Err(NumError::shape("adamw", &[p.value.shape(), g.shape()]));
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            if !p.trainable {
                continue;
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let w = p.value.data_mut();
            for j in 0..w.len() {
                let gj = g.data()[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                w[j] -= c.lr * (mh / (vh.sqrt() + c.eps) + c.weight_decay * w[j]);
            }
        }
        Ok(())
    }
}
