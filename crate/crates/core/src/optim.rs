//! Adam optimizer over a [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnarch::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update with learning rate `lr`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters ({} optimizer slots)",
                grads.len(),
                params.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let mut p = params.get(i).to_vec();
            if g.len() != p.len() {
                return Err(Error::Shape(format!("gradient {i} has {} values, parameter has {}", g.len(), p.len())));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
            params.set(i, p)?;
        }
        Ok(())
    }
}
