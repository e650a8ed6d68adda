//! Test-time measurements: baselines, raw overlap, rejection consistency and curves.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::family::{DecisionSetFamily, ScoreRule};
use crate::metrics::{evaluate, Metrics};
use crate::net::SelectiveModel;
use crate::select::{select, ScoreCache, Selection, SelectionCriterion, SelectionGrid};

/// Softmax response: `S_k = {k = argmax f} ∩ {max f ≥ t}`.
pub fn sr_baseline(model: Arc<SelectiveModel>, t: f64) -> DecisionSetFamily {
    DecisionSetFamily::from_scores(model, t, ScoreRule::SoftmaxResponse).expect("any model has a softmax response")
}

/// Fraction of points lying in at least two raw sets `{f_k > t}`.
pub fn osp_overlap(model: &SelectiveModel, t: f64, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("overlap of an empty dataset"));
    }
    let trace = model.forward_trace(data.iter().map(|e| e.features.as_slice()))?;
    let k = model.num_outputs();
    let hits = trace
        .probs
        .chunks(k)
        .filter(|row| row.iter().filter(|&&f| f > t).count() >= 2)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Rejection-region nesting across families ordered by increasing target error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// `(i, j, mass)` for `i < j`: the mass rejected by family `j` yet accepted by family `i`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub max_violation: f64,
    pub fully_nested: bool,
}

/// For every `i < j`, the mass of `R_j ∩ R_i^c`: points rejected at the looser target `ε_j`
/// but accepted at the stricter `ε_i`. Nested regions (`R_j ⊂ R_i`) give zero everywhere.
pub fn consistency_check(families: &[DecisionSetFamily], data: &LabeledDataset) -> Result<ConsistencyReport> {
    if families.len() < 2 {
        return Err(Error::invalid("consistency needs at least two families"));
    }
    if data.is_empty() {
        return Err(Error::invalid("consistency of an empty dataset"));
    }
    if let Some(f) = families.iter().find(|f| f.dim() != data.dim()) {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: data.dim(),
        });
    }
    let rejected: Vec<Vec<bool>> = families
        .iter()
        .map(|f| {
            data.iter()
                .map(|e| Ok(f.classify(&e.features)?.is_reject()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n = data.len() as f64;
    let mut pairs = Vec::new();
    for i in 0..families.len() {
        for j in i + 1..families.len() {
            let count = rejected[j]
                .iter()
                .zip(&rejected[i])
                .filter(|&(&rj, &ri)| rj && !ri)
                .count();
            pairs.push((i, j, count as f64 / n));
        }
    }
    let max_violation = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(ConsistencyReport {
        pairs,
        max_violation,
        fully_nested: max_violation == 0.0,
    })
}

/// One point of a coverage-error curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub target_error: f64,
    pub achieved_error: f64,
    pub achieved_coverage: f64,
    pub feasible: bool,
    pub mu: f64,
    pub t: f64,
}

/// Coverage at `eps` on the piecewise-linear curve through consecutive
/// `(achieved_error, achieved_coverage)` pairs; `None` outside every segment.
pub fn interpolate(points: &[CurvePoint], eps: f64) -> Option<f64> {
    if let [only] = points {
        return (only.achieved_error == eps).then_some(only.achieved_coverage);
    }
    for w in points.windows(2) {
        let (e0, c0, e1, c1) = (w[0].achieved_error, w[0].achieved_coverage, w[1].achieved_error, w[1].achieved_coverage);
        let (lo, hi) = (e0.min(e1), e0.max(e1));
        if eps < lo || eps > hi {
            continue;
        }
        if e1 == e0 {
            return Some(c0);
        }
        return Some(c0 + (c1 - c0) * (eps - e0) / (e1 - e0));
    }
    None
}

/// A trained family of models plus a rule for hardening them, selected on validation data.
pub trait SelectionMethod {
    fn tag(&self) -> &str;

    /// The chosen cell and its family at the given criterion.
    fn choose(&self, criterion: SelectionCriterion) -> Result<(Selection, DecisionSetFamily)>;
}

/// Grid selection over cached validation scores.
#[derive(Debug, Clone)]
pub struct GridMethod {
    tag: String,
    caches: Vec<ScoreCache>,
    rule: ScoreRule,
    pub grid: SelectionGrid,
}

impl GridMethod {
    pub fn new(
        tag: impl Into<String>,
        models: &[(f64, Arc<SelectiveModel>)],
        t_values: &[f64],
        val: &LabeledDataset,
        rule: ScoreRule,
    ) -> Result<Self> {
        let caches = models
            .iter()
            .map(|(p, m)| ScoreCache::new(*p, Arc::clone(m), val))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = val.labels().collect();
        let grid = SelectionGrid::from_caches(&caches, t_values, &labels, rule)?;
        Ok(Self {
            tag: tag.into(),
            caches,
            rule,
            grid,
        })
    }

    /// OSP models keyed by `μ`, hardened.
    pub fn osp(models: &[(f64, Arc<SelectiveModel>)], t_values: &[f64], val: &LabeledDataset) -> Result<Self> {
        Self::new("osp", models, t_values, val, ScoreRule::Harden)
    }

    /// One cross-entropy model thresholded on its maximal score.
    pub fn softmax_response(model: Arc<SelectiveModel>, t_values: &[f64], val: &LabeledDataset) -> Result<Self> {
        Self::new("sr", &[(0.0, model)], t_values, val, ScoreRule::SoftmaxResponse)
    }

    /// Abstention-output models keyed by payoff, thresholded on `f_?`.
    pub fn gamblers(models: &[(f64, Arc<SelectiveModel>)], t_values: &[f64], val: &LabeledDataset) -> Result<Self> {
        Self::new("dg", models, t_values, val, ScoreRule::Abstention)
    }

    pub fn rule(&self) -> ScoreRule {
        self.rule
    }
}

impl SelectionMethod for GridMethod {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn choose(&self, criterion: SelectionCriterion) -> Result<(Selection, DecisionSetFamily)> {
        let s = select(&self.grid, criterion)?;
        let model = Arc::clone(&self.caches[s.mu_index(&self.grid)].model);
        let family = DecisionSetFamily::from_scores(model, s.cell.t, self.rule)?;
        Ok((s, family))
    }
}

/// Test metrics of the method's error-constrained choice at one target.
pub fn evaluate_at(method: &dyn SelectionMethod, eps: f64, test: &LabeledDataset) -> Result<(Selection, Metrics)> {
    let (s, family) = method.choose(SelectionCriterion::ErrorConstrained(eps))?;
    Ok((s, evaluate(&family, test)?))
}

/// Selects at each target (ascending) and records achieved test error and coverage.
pub fn coverage_error_curve(method: &dyn SelectionMethod, targets: &[f64], test: &LabeledDataset) -> Result<Vec<CurvePoint>> {
    if targets.is_empty() {
        return Err(Error::invalid("no target errors given"));
    }
    if targets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("target errors must be sorted ascending"));
    }
    targets
        .iter()
        .map(|&eps| {
            let (s, m) = evaluate_at(method, eps, test)?;
            Ok(CurvePoint {
                method: method.tag().to_string(),
                target_error: eps,
                achieved_error: m.raw_error,
                achieved_coverage: m.coverage,
                feasible: s.feasible,
                mu: s.cell.mu,
                t: s.cell.t,
            })
        })
        .collect()
}

/// Targets `(i/2)%` for `i = 1..=20`.
pub fn default_curve_targets() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 200.0).collect()
}
