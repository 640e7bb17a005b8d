use alloc::vec;
use alloc::vec::Vec;

use super::{Grads, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates and step count for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64, config: AdamConfig) -> AdamState {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.values.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            config,
        }
    }

    /// One bias-corrected Adam update. Fails without touching any parameter
    /// if a gradient is not finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("learning rate {}", self.lr)));
        }
        for (id, p) in params.iter() {
            if grads.get(id).iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(alloc::format!(
                    "non-finite gradient for parameter `{}`",
                    p.name
                )));
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads.get(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let values = params.values_mut(id);
            for k in 0..values.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                values[k] -= self.lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
