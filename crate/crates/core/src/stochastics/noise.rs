use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SampleError;
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Gumbel,
}

/// Noise a dependency function consumes, `[batch, dim]` per draw. Requests with the
/// same key share one tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseRequest {
    pub key: String,
    pub kind: NoiseKind,
    pub dim: usize,
}

impl NoiseRequest {
    pub fn new(key: impl Into<String>, kind: NoiseKind, dim: usize) -> Self {
        Self { key: key.into(), kind, dim }
    }
}

/// Frozen noise tensors keyed by request key.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    pub seed: u64,
    pub batch: usize,
    tensors: BTreeMap<String, Tensor>,
}

impl NoiseBundle {
    /// Draws every requested tensor. Keys are filled in sorted order from one
    /// ChaCha stream, so the same requests and seed always give the same values.
    pub fn generate(requests: &[NoiseRequest], batch: usize, seed: u64) -> Result<Self, SampleError> {
        let merged = merge(requests)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
        let mut tensors = BTreeMap::new();
        for (key, (kind, dim)) in merged {
            let data: Vec<f64> = match kind {
                NoiseKind::Gaussian => (0..batch * dim).map(|_| rng.sample(StandardNormal)).collect(),
                NoiseKind::Gumbel => (0..batch * dim).map(|_| rng.sample(gumbel)).collect(),
            };
            tensors.insert(key, Tensor::matrix(batch, dim, data).expect("sized"));
        }
        Ok(Self { seed, batch, tensors })
    }

    /// All-zero noise for every request.
    pub fn zeros(requests: &[NoiseRequest], batch: usize) -> Result<Self, SampleError> {
        let tensors = merge(requests)?.into_iter().map(|(key, (_, dim))| (key, Tensor::zeros(&[batch, dim]))).collect();
        Ok(Self { seed: 0, batch, tensors })
    }

    pub fn get(&self, key: &str) -> Option<&Tensor> {
        self.tensors.get(key)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: Tensor) {
        self.tensors.insert(key.into(), value);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }
}

fn merge(requests: &[NoiseRequest]) -> Result<BTreeMap<String, (NoiseKind, usize)>, SampleError> {
    let mut merged: BTreeMap<String, (NoiseKind, usize)> = BTreeMap::new();
    for r in requests {
        match merged.get(&r.key) {
            Some(&(kind, dim)) if kind != r.kind || dim != r.dim => {
                return Err(SampleError::ConflictingNoise(r.key.clone()));
            }
            Some(_) => {}
            None => {
                merged.insert(r.key.clone(), (r.kind, r.dim));
            }
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_noise() {
        let reqs = vec![NoiseRequest::new("eps", NoiseKind::Gaussian, 3), NoiseRequest::new("g", NoiseKind::Gumbel, 4)];
        let a = NoiseBundle::generate(&reqs, 5, 11).unwrap();
        let b = NoiseBundle::generate(&reqs, 5, 11).unwrap();
        let c = NoiseBundle::generate(&reqs, 5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.get("eps"), c.get("eps"));
        assert_eq!(a.get("g").unwrap().shape(), &[5, 4]);
    }

    #[test]
    fn shared_keys_must_agree() {
        let reqs =
            vec![NoiseRequest::new("eps", NoiseKind::Gaussian, 3), NoiseRequest::new("eps", NoiseKind::Gaussian, 3)];
        assert_eq!(NoiseBundle::generate(&reqs, 2, 0).unwrap().keys().count(), 1);
        let bad =
            vec![NoiseRequest::new("eps", NoiseKind::Gaussian, 3), NoiseRequest::new("eps", NoiseKind::Gaussian, 2)];
        assert!(matches!(NoiseBundle::generate(&bad, 2, 0), Err(SampleError::ConflictingNoise(_))));
    }
}
