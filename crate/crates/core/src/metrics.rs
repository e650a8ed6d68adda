//! Empirical coverage, raw error and one-sided error of a decision set family.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::family::{DecisionSetFamily, SelectiveDecision};

/// Empirical probabilities of the acceptance, error and one-sided error events.
///
/// The integer counts are kept alongside the probabilities so that sums of one-sided
/// errors can be formed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub coverage: f64,
    pub raw_error: f64,
    pub per_class_one_sided_error: Vec<f64>,
    pub rejection_rate: f64,
    pub accepted: usize,
    pub errors: usize,
    pub one_sided_counts: Vec<usize>,
}

impl Metrics {
    /// Tallies decisions against labels. `num_sets` is the number of decision sets K.
    pub fn from_decisions<I>(decisions: I, num_sets: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (SelectiveDecision, usize)>,
    {
        let mut n = 0;
        let mut accepted = 0;
        let mut one_sided = vec![0usize; num_sets];
        for (decision, label) in decisions {
            n += 1;
            if let SelectiveDecision::Predict(k) = decision {
                if k >= num_sets {
                    return Err(Error::invalid(format!("prediction {k} outside {num_sets} sets")));
                }
                accepted += 1;
                if label != k {
                    one_sided[k] += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::invalid("metrics need a nonempty dataset"));
        }
        let nf = n as f64;
        let errors: usize = one_sided.iter().sum();
        Ok(Self {
            n,
            coverage: accepted as f64 / nf,
            raw_error: errors as f64 / nf,
            per_class_one_sided_error: one_sided.iter().map(|&c| c as f64 / nf).collect(),
            rejection_rate: (n - accepted) as f64 / nf,
            accepted,
            errors,
            one_sided_counts: one_sided,
        })
    }

    /// `Σ_k P̂(E^k)`, formed from summed counts.
    pub fn one_sided_error_sum(&self) -> f64 {
        self.one_sided_counts.iter().sum::<usize>() as f64 / self.n as f64
    }
}

/// Evaluates `family` on every point of `data` (memberships after the tie-break).
pub fn evaluate(family: &DecisionSetFamily, data: &LabeledDataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    if family.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            got: data.dim(),
        });
    }
    let decisions = data
        .iter()
        .map(|e| Ok((family.classify(&e.features)?, e.label)))
        .collect::<Result<Vec<_>>>()?;
    Metrics::from_decisions(decisions, family.num_sets())
}

/// Per-point decisions of `family` on `data`.
pub fn decisions(family: &DecisionSetFamily, data: &LabeledDataset) -> Result<Vec<SelectiveDecision>> {
    data.iter().map(|e| family.classify(&e.features)).collect()
}
