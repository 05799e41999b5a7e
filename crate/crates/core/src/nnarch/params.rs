use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Ordered collection of named, trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a trainable tensor. Panics if `data` does not match `shape`.
    pub fn push(&mut self, name: String, shape: &[usize], data: Vec<f64>) -> usize {
        self.names.push(name);
        self.tensors.push(Tensor::variable(shape, data));
        self.tensors.len() - 1
    }

    /// Uniform weights in `±sqrt(6 / fan_in)`.
    pub(crate) fn push_weight(&mut self, name: String, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> usize {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.push(name, shape, data)
    }

    pub(crate) fn push_zeros(&mut self, name: String, shape: &[usize]) -> usize {
        self.push(name, shape, vec![0.0; shape.iter().product()])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn refs(&self) -> Vec<&Tensor> {
        self.tensors.iter().collect()
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces the values of parameter `i`, keeping its shape.
    pub fn set(&mut self, i: usize, data: Vec<f64>) -> Result<()> {
        let t = &self.tensors[i];
        if data.len() != t.numel() {
            return Err(Error::Shape(format!(
                "parameter {} expects {} values, got {}",
                self.names[i],
                t.numel(),
                data.len()
            )));
        }
        self.tensors[i] = Tensor::variable(t.shape(), data);
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
