use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which part of the model a parameter belongs to. Each group is updated by its own Adam clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Generative,
    Recognition,
    Discriminator,
    Prior,
}

impl Owner {
    pub const MODEL: [Owner; 3] = [Owner::Generative, Owner::Recognition, Owner::Prior];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub owner: Owner,
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Named parameters with their Adam moment buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    adam_steps: BTreeMap<Owner, u64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, owner: Owner, value: Tensor) -> ParamId {
        let zeros = Tensor::zeros(value.shape());
        self.entries.push(ParamEntry { name: name.into(), owner, value, m: zeros.clone(), v: zeros });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn ids_owned_by(&self, owners: &[Owner]) -> Vec<ParamId> {
        self.ids().filter(|id| owners.contains(&self.entries[id.0].owner)).collect()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn adam_steps(&self) -> &BTreeMap<Owner, u64> {
        &self.adam_steps
    }

    pub fn scalar_count(&self, owners: &[Owner]) -> usize {
        self.entries.iter().filter(|e| owners.contains(&e.owner)).map(|e| e.value.len()).sum()
    }

    /// True when both stores list the same names, owners and shapes in the same order.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.owner == b.owner && a.value.shape() == b.value.shape())
    }

    /// Rebuilds a store from saved entries and step counters.
    pub fn from_parts(entries: Vec<ParamEntry>, adam_steps: BTreeMap<Owner, u64>) -> Result<Self, NumericsError> {
        for e in &entries {
            if e.m.shape() != e.value.shape() || e.v.shape() != e.value.shape() {
                return Err(NumericsError::ShapeMismatch(format!("moment buffers of {}", e.name)));
            }
        }
        Ok(Self { entries, adam_steps })
    }

    /// One bias-corrected Adam step on every parameter owned by one of `owners`.
    ///
    /// `grads` is indexed like the store. Parameters outside `owners` are not touched,
    /// and each owner group advances its own step counter.
    pub fn adam_step(&mut self, grads: &[Tensor], owners: &[Owner], cfg: &AdamConfig) -> Result<(), NumericsError> {
        if grads.len() != self.entries.len() {
            return Err(NumericsError::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.entries.len()
            )));
        }
        for (e, g) in self.entries.iter().zip(grads) {
            if !owners.contains(&e.owner) {
                continue;
            }
            if g.shape() != e.value.shape() {
                return Err(NumericsError::ShapeMismatch(format!("gradient of {}", e.name)));
            }
            if !g.is_finite() {
                return Err(NumericsError::NonFiniteGradient(e.name.clone()));
            }
        }
        let mut steps = BTreeMap::new();
        for &owner in owners {
            let t = self.adam_steps.entry(owner).or_insert(0);
            *t += 1;
            steps.insert(owner, *t);
        }
        for (e, g) in self.entries.iter_mut().zip(grads) {
            let Some(&t) = steps.get(&e.owner) else { continue };
            let c1 = 1.0 - cfg.beta1.powi(t as i32);
            let c2 = 1.0 - cfg.beta2.powi(t as i32);
            let (value, m, v) = (e.value.data_mut(), e.m.data_mut(), e.v.data_mut());
            for i in 0..value.len() {
                let gi = g.data()[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Owner::Generative, Tensor::scalar(x));
        (store, id)
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        for g in [3.0, -0.25] {
            let (mut store, id) = scalar_store(1.0);
            store.adam_step(&[Tensor::scalar(g)], &[Owner::Generative], &cfg).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((store.value(id).item() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_identity() {
        let (mut store, id) = scalar_store(0.75);
        store.adam_step(&[Tensor::scalar(0.0)], &[Owner::Generative], &AdamConfig::default()).unwrap();
        assert_eq!(store.value(id).item(), 0.75);
    }

    #[test]
    fn two_steps_follow_the_recurrence() {
        let cfg = AdamConfig { lr: 0.1, beta1: 0.5, beta2: 0.999, eps: 1e-8 };
        let (mut store, id) = scalar_store(2.0);
        let gs = [0.4, -1.3];
        for g in gs {
            store.adam_step(&[Tensor::scalar(g)], &[Owner::Generative], &cfg).unwrap();
        }
        // hand-rolled recurrence
        let (mut x, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for (t, g) in gs.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.5 * m + 0.5 * g;
            v = 0.999 * v + 0.001 * g * g;
            x -= 0.1 * (m / (1.0 - 0.5f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert_eq!(store.value(id).item(), x);
        assert_eq!(store.adam_steps()[&Owner::Generative], 2);
    }

    #[test]
    fn other_owners_are_untouched() {
        let mut store = ParamStore::new();
        let a = store.add("a", Owner::Generative, Tensor::scalar(1.0));
        let b = store.add("b", Owner::Discriminator, Tensor::scalar(1.0));
        let grads = vec![Tensor::scalar(1.0), Tensor::scalar(1.0)];
        store.adam_step(&grads, &[Owner::Discriminator], &AdamConfig::default()).unwrap();
        assert_eq!(store.value(a).item(), 1.0);
        assert!(store.value(b).item() < 1.0);
        assert!(!store.adam_steps().contains_key(&Owner::Generative));
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let (mut store, id) = scalar_store(1.0);
        let err = store.adam_step(&[Tensor::scalar(f64::NAN)], &[Owner::Generative], &AdamConfig::default());
        assert_eq!(err, Err(NumericsError::NonFiniteGradient("w".into())));
        assert_eq!(store.value(id).item(), 1.0);
    }
}
