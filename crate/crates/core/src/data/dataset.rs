use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DataError;
use crate::numerics::Tensor;

/// Observed columns with a shared row count, one `[N, dim]` tensor per observed variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: BTreeMap<String, Tensor>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(columns: BTreeMap<String, Tensor>, labels: Option<Vec<usize>>) -> Result<Self, DataError> {
        let mut rows = None;
        for (name, t) in &columns {
            if t.shape().len() != 2 {
                return Err(DataError::BadParameter(format!("column {name} must be a matrix")));
            }
            match rows {
                None => rows = Some(t.rows()),
                Some(r) if r != t.rows() => {
                    return Err(DataError::BadParameter(format!("column {name} has {} rows, expected {r}", t.rows())));
                }
                Some(_) => {}
            }
        }
        let rows = rows.ok_or_else(|| DataError::BadParameter("dataset without columns".into()))?;
        if rows == 0 {
            return Err(DataError::BadParameter("empty dataset".into()));
        }
        if labels.as_ref().is_some_and(|l| l.len() != rows) {
            return Err(DataError::BadParameter("label count differs from row count".into()));
        }
        Ok(Self { columns, labels })
    }

    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, Tensor::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&Tensor> {
        self.columns.get(name)
    }

    pub fn columns(&self) -> &BTreeMap<String, Tensor> {
        &self.columns
    }

    pub fn rows(&self, indices: &[usize]) -> BTreeMap<String, Tensor> {
        self.columns.iter().map(|(k, t)| (k.clone(), t.select_rows(indices))).collect()
    }

    /// `batch` rows drawn uniformly with replacement.
    pub fn minibatch(&self, batch: usize, seed: u64) -> BTreeMap<String, Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.len();
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
        self.rows(&idx)
    }

    /// Leading `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        Self { columns: self.rows(&idx), labels }
    }
}
