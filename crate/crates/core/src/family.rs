//! Families of per-class decision sets `{S_k}` and the selective classifier they define.
//!
//! A point is predicted as `k` when it lies in `S_k`; the rejection region is whatever
//! lies in none of the sets. When sets overlap, the smallest class index wins.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::SelectiveModel;
use crate::region::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectiveDecision {
    Predict(usize),
    Reject,
}

impl SelectiveDecision {
    pub fn is_reject(self) -> bool {
        matches!(self, SelectiveDecision::Reject)
    }

    pub fn class(self) -> Option<usize> {
        match self {
            SelectiveDecision::Predict(k) => Some(k),
            SelectiveDecision::Reject => None,
        }
    }
}

/// How soft scores become set memberships.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreRule {
    /// `S_k = {f_k ≥ t} ∩ {k = argmax f}`.
    Harden,
    /// `S_k = {k = argmax f} ∩ {max f ≥ t}`.
    SoftmaxResponse,
    /// Models with an extra abstention output `f_?` (last position):
    /// `S_k = {k = argmax_{j<K} f_j} ∩ {f_? < t}`.
    Abstention,
}

impl ScoreRule {
    /// Number of decision sets produced from a score vector of length `num_outputs`.
    pub fn num_sets(self, num_outputs: usize) -> usize {
        match self {
            ScoreRule::Abstention => num_outputs - 1,
            _ => num_outputs,
        }
    }

    /// Writes set memberships for one score vector into `out`.
    pub fn memberships_into(self, scores: &[f64], t: f64, out: &mut [bool]) {
        out.iter_mut().for_each(|m| *m = false);
        match self {
            ScoreRule::Harden => {
                let k = argmax(scores);
                out[k] = scores[k] >= t;
            }
            ScoreRule::SoftmaxResponse => {
                let k = argmax(scores);
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                out[k] = max >= t;
            }
            ScoreRule::Abstention => {
                let (classes, abstain) = scores.split_at(scores.len() - 1);
                let k = argmax(classes);
                out[k] = abstain[0] < t;
            }
        }
    }

    pub fn decide(self, scores: &[f64], t: f64) -> SelectiveDecision {
        let mut m = vec![false; self.num_sets(scores.len())];
        self.memberships_into(scores, t, &mut m);
        first_member(&m)
    }
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn first_member(memberships: &[bool]) -> SelectiveDecision {
    memberships
        .iter()
        .position(|&m| m)
        .map_or(SelectiveDecision::Reject, SelectiveDecision::Predict)
}

#[derive(Debug, Clone)]
enum Repr {
    Regions { dim: usize, regions: Vec<Region> },
    Scored { model: Arc<SelectiveModel>, threshold: f64, rule: ScoreRule },
}

/// K decision sets over a feature space of fixed dimension.
#[derive(Debug, Clone)]
pub struct DecisionSetFamily {
    repr: Repr,
    disjoint: bool,
}

impl DecisionSetFamily {
    /// Family of explicit regions. `disjoint` records a caller promise that at most one
    /// region contains any point; see [`DecisionSetFamily::is_empirically_disjoint`].
    pub fn from_regions(dim: usize, regions: Vec<Region>, disjoint: bool) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::invalid("a decision set family needs at least one set"));
        }
        if let Some(bad) = regions.iter().find(|r| r.min_dim() > dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.min_dim(),
            });
        }
        Ok(Self {
            repr: Repr::Regions { dim, regions },
            disjoint,
        })
    }

    /// Family defined by thresholding a model's soft scores. Always disjoint.
    pub fn from_scores(model: Arc<SelectiveModel>, threshold: f64, rule: ScoreRule) -> Result<Self> {
        if rule == ScoreRule::Abstention && model.num_outputs() < 2 {
            return Err(Error::invalid("an abstention model needs at least one class output plus f_?"));
        }
        Ok(Self {
            repr: Repr::Scored {
                model,
                threshold,
                rule,
            },
            disjoint: true,
        })
    }

    pub fn is_disjoint(&self) -> bool {
        self.disjoint
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Regions { dim, .. } => *dim,
            Repr::Scored { model, .. } => model.input_dim(),
        }
    }

    pub fn num_sets(&self) -> usize {
        match &self.repr {
            Repr::Regions { regions, .. } => regions.len(),
            Repr::Scored { model, rule, .. } => rule.num_sets(model.num_outputs()),
        }
    }

    /// The explicit regions, if this family has them.
    pub fn regions(&self) -> Option<&[Region]> {
        match &self.repr {
            Repr::Regions { regions, .. } => Some(regions),
            Repr::Scored { .. } => None,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match &self.repr {
            Repr::Scored { threshold, .. } => Some(*threshold),
            Repr::Regions { .. } => None,
        }
    }

    /// Raw membership of `x` in every set, before any tie-break.
    pub fn memberships(&self, x: &[f64]) -> Result<Vec<bool>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match &self.repr {
            Repr::Regions { regions, .. } => regions.iter().map(|r| r.contains(x)).collect(),
            Repr::Scored {
                model,
                threshold,
                rule,
            } => {
                let scores = model.forward(x)?;
                let mut m = vec![false; rule.num_sets(scores.len())];
                rule.memberships_into(&scores, *threshold, &mut m);
                m
            }
        })
    }

    /// Predicts the smallest-index set containing `x`, or rejects.
    pub fn classify(&self, x: &[f64]) -> Result<SelectiveDecision> {
        Ok(first_member(&self.memberships(x)?))
    }

    /// True when no point of `data` lies in two or more sets.
    pub fn is_empirically_disjoint(&self, data: &LabeledDataset) -> Result<bool> {
        for e in data {
            if self.memberships(&e.features)?.iter().filter(|&&m| m).count() > 1 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
