//! Labelled datasets and the empirical law they induce.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: a feature vector and a 0-indexed class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// An ordered collection of examples sharing a feature dimension, with labels in `[0, K)`.
///
/// Every probability computed over a dataset is the plain unweighted mean over its
/// examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    examples: Vec<LabeledExample>,
    num_classes: usize,
    dim: usize,
}

impl LabeledDataset {
    /// Builds a dataset, inferring `dim` from the first example.
    pub fn new(examples: Vec<LabeledExample>, num_classes: usize) -> Result<Self> {
        let dim = examples
            .first()
            .map(|e| e.features.len())
            .ok_or_else(|| Error::invalid("cannot infer the dimension of an empty dataset"))?;
        Self::with_dim(examples, num_classes, dim)
    }

    pub fn with_dim(examples: Vec<LabeledExample>, num_classes: usize, dim: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("a dataset needs at least one class"));
        }
        for (i, e) in examples.iter().enumerate() {
            if e.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.features.len(),
                });
            }
            if e.label >= num_classes {
                return Err(Error::invalid(format!(
                    "example {i} has label {} but there are only {num_classes} classes",
                    e.label
                )));
            }
            if e.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("example {i} has a non-finite feature")));
            }
        }
        Ok(Self {
            examples,
            num_classes,
            dim,
        })
    }

    pub fn from_parts(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let examples = features
            .into_iter()
            .zip(labels)
            .map(|(f, y)| LabeledExample::new(f, y))
            .collect();
        Self::new(examples, num_classes)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.examples.iter().map(|e| e.label)
    }

    /// `n_k` for every class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// `n_{≠k} = n − n_k`.
    pub fn count_not(&self, k: usize) -> usize {
        self.len() - self.class_counts()[k]
    }

    /// Copy of the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    /// Relabels the class count (e.g. a training split that happens to miss the top class).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if self.examples.iter().any(|e| e.label >= num_classes) {
            return Err(Error::invalid("labels exceed the requested class count"));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Splits into consecutive parts of a seeded permutation, sized by `fractions`.
    pub fn split(&self, fractions: &[f64], seed: u64) -> Result<Vec<Self>> {
        Ok(split_indices(self.len(), fractions, seed)?
            .iter()
            .map(|idx| self.subset(idx))
            .collect())
    }
}

impl<'a> IntoIterator for &'a LabeledDataset {
    type Item = &'a LabeledExample;
    type IntoIter = std::slice::Iter<'a, LabeledExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// Partitions `0..n` into index sets with sizes proportional to `fractions`.
///
/// Fractions must be positive and sum to one (within 1e-9); the last part absorbs rounding.
pub fn split_indices(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::invalid("split fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions sum to {total}, not 1")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut parts = Vec::with_capacity(fractions.len());
    let mut start = 0;
    let mut cumulative = 0.0;
    for (i, f) in fractions.iter().enumerate() {
        cumulative += f;
        let end = if i + 1 == fractions.len() {
            n
        } else {
            ((cumulative * n as f64).round() as usize).clamp(start, n)
        };
        parts.push(order[start..end].to_vec());
        start = end;
    }
    Ok(parts)
}
