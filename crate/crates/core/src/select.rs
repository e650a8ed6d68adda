//! Hardening soft scores into decision sets and picking `(μ, t)` on validation data.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::family::{argmax, DecisionSetFamily, ScoreRule};
use crate::net::SelectiveModel;

/// `S_k = {f_k ≥ t} ∩ {k = argmax f}`.
pub fn harden(model: Arc<SelectiveModel>, t: f64) -> DecisionSetFamily {
    DecisionSetFamily::from_scores(model, t, ScoreRule::Harden).expect("hardening accepts any model")
}

/// `n` equally spaced values covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// 100 thresholds equally spaced in `[0, 1]`.
pub fn default_thresholds() -> Vec<f64> {
    linspace(0.0, 1.0, 100)
}

/// 10 values equally spaced in `[0.01, 1]`, then 20 equally spaced steps up to 16.
pub fn wide_mu_grid() -> Vec<f64> {
    let mut m = linspace(0.01, 1.0, 10);
    m.extend((1..=20).map(|i| 1.0 + 15.0 * i as f64 / 20.0));
    m
}

/// 8 log-spaced values in `[0.05, 16]`.
pub fn desk_mu_grid() -> Vec<f64> {
    let (lo, hi) = (0.05f64, 16.0f64);
    (0..8).map(|i| lo * (hi / lo).powf(i as f64 / 7.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "target", rename_all = "snake_case")]
pub enum SelectionCriterion {
    ErrorConstrained(f64),
    CoverageConstrained(f64),
}

impl SelectionCriterion {
    pub fn target(self) -> f64 {
        match self {
            SelectionCriterion::ErrorConstrained(v) | SelectionCriterion::CoverageConstrained(v) => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SelectionCriterion::ErrorConstrained(_) => "error",
            SelectionCriterion::CoverageConstrained(_) => "coverage",
        }
    }

    pub fn validate(self) -> Result<()> {
        let v = self.target();
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("selection target {v} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Validation coverage and error of one `(μ, t)` pair. `mu` is the model hyperparameter
/// (the payoff `o` for abstention-output models).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub mu: f64,
    pub t: f64,
    pub coverage: f64,
    pub error: f64,
}

/// Every `(μ, t)` cell, `μ`-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub mu_values: Vec<f64>,
    pub t_values: Vec<f64>,
    pub cells: Vec<GridCell>,
}

/// Per-model validation scores, computed once and reused for every threshold.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    pub mu: f64,
    pub model: Arc<SelectiveModel>,
    /// Row-major `n × outputs`.
    scores: Vec<f64>,
    width: usize,
}

impl ScoreCache {
    pub fn new(mu: f64, model: Arc<SelectiveModel>, data: &LabeledDataset) -> Result<Self> {
        let trace = model.forward_trace(data.iter().map(|e| e.features.as_slice()))?;
        Ok(Self {
            mu,
            width: model.num_outputs(),
            model,
            scores: trace.probs,
        })
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.scores.chunks(self.width)
    }
}

impl SelectionGrid {
    /// Fills the grid by thresholding cached scores with `rule` against `labels`.
    pub fn from_caches(caches: &[ScoreCache], t_values: &[f64], labels: &[usize], rule: ScoreRule) -> Result<Self> {
        if caches.is_empty() || t_values.is_empty() {
            return Err(Error::invalid("the selection grid is empty"));
        }
        if labels.is_empty() {
            return Err(Error::invalid("validation data is empty"));
        }
        let n = labels.len() as f64;
        let mut cells = Vec::with_capacity(caches.len() * t_values.len());
        for cache in caches {
            // Decisions depend on t only through a threshold on one score per row.
            let rows: Vec<(usize, f64)> = cache
                .rows()
                .map(|s| {
                    let k = match rule {
                        ScoreRule::Abstention => argmax(&s[..s.len() - 1]),
                        _ => argmax(s),
                    };
                    let key = match rule {
                        ScoreRule::Abstention => s[s.len() - 1],
                        _ => s[k],
                    };
                    (k, key)
                })
                .collect();
            if rows.len() != labels.len() {
                return Err(Error::invalid("score cache and labels differ in length"));
            }
            for &t in t_values {
                let (mut acc, mut err) = (0usize, 0usize);
                for (&(k, key), &y) in rows.iter().zip(labels) {
                    let accepted = match rule {
                        ScoreRule::Abstention => key < t,
                        _ => key >= t,
                    };
                    if accepted {
                        acc += 1;
                        err += usize::from(k != y);
                    }
                }
                cells.push(GridCell {
                    mu: cache.mu,
                    t,
                    coverage: acc as f64 / n,
                    error: err as f64 / n,
                });
            }
        }
        Ok(Self {
            mu_values: caches.iter().map(|c| c.mu).collect(),
            t_values: t_values.to_vec(),
            cells,
        })
    }

    /// Fills the grid for hardened OSP models.
    pub fn build(models: &[(f64, Arc<SelectiveModel>)], t_values: &[f64], val: &LabeledDataset) -> Result<Self> {
        let caches = models
            .iter()
            .map(|(mu, m)| ScoreCache::new(*mu, Arc::clone(m), val))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = val.labels().collect();
        Self::from_caches(&caches, t_values, &labels, ScoreRule::Harden)
    }

    pub fn cell(&self, mu_index: usize, t_index: usize) -> &GridCell {
        &self.cells[mu_index * self.t_values.len() + t_index]
    }
}

/// The selected cell and whether it met the criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub criterion: SelectionCriterion,
    pub index: usize,
    pub cell: GridCell,
    pub feasible: bool,
}

impl Selection {
    pub fn mu_index(&self, grid: &SelectionGrid) -> usize {
        self.index / grid.t_values.len()
    }
}

const TOL: f64 = 1e-12;

/// `true` when `a` beats `b` by the listed keys in order (each `(a, b, larger_is_better)`).
fn better(keys: &[(f64, f64, bool)]) -> bool {
    for &(a, b, larger) in keys {
        if a != b {
            return (a > b) == larger;
        }
    }
    false
}

/// Picks a cell per the criterion.
///
/// Error-constrained: among cells with error ≤ ε, maximal coverage, then larger `t`, then
/// smaller `μ`; otherwise minimal error (then larger coverage, larger `t`, smaller `μ`),
/// flagged infeasible.
///
/// Coverage-constrained: among cells with coverage ≥ ϱ, minimal error, then larger
/// coverage, larger `t`, smaller `μ`; otherwise maximal coverage (then smaller error,
/// larger `t`, smaller `μ`), flagged infeasible.
pub fn select(grid: &SelectionGrid, criterion: SelectionCriterion) -> Result<Selection> {
    criterion.validate()?;
    if grid.cells.is_empty() {
        return Err(Error::invalid("the selection grid is empty"));
    }
    let feasible = |c: &GridCell| match criterion {
        SelectionCriterion::ErrorConstrained(eps) => c.error <= eps + TOL,
        SelectionCriterion::CoverageConstrained(rho) => c.coverage >= rho - TOL,
    };
    let rank = |a: &GridCell, b: &GridCell, feasible_pool: bool| -> bool {
        match (criterion, feasible_pool) {
            (SelectionCriterion::ErrorConstrained(_), true) => {
                better(&[(a.coverage, b.coverage, true), (a.t, b.t, true), (a.mu, b.mu, false)])
            }
            (SelectionCriterion::ErrorConstrained(_), false) => better(&[
                (a.error, b.error, false),
                (a.coverage, b.coverage, true),
                (a.t, b.t, true),
                (a.mu, b.mu, false),
            ]),
            (SelectionCriterion::CoverageConstrained(_), true) => better(&[
                (a.error, b.error, false),
                (a.coverage, b.coverage, true),
                (a.t, b.t, true),
                (a.mu, b.mu, false),
            ]),
            (SelectionCriterion::CoverageConstrained(_), false) => better(&[
                (a.coverage, b.coverage, true),
                (a.error, b.error, false),
                (a.t, b.t, true),
                (a.mu, b.mu, false),
            ]),
        }
    };
    let any_feasible = grid.cells.iter().any(feasible);
    let mut best: Option<usize> = None;
    for (i, c) in grid.cells.iter().enumerate() {
        if any_feasible && !feasible(c) {
            continue;
        }
        if best.is_none_or(|b| rank(c, &grid.cells[b], any_feasible)) {
            best = Some(i);
        }
    }
    let index = best.expect("grid is nonempty");
    Ok(Selection {
        criterion,
        index,
        cell: grid.cells[index],
        feasible: any_feasible,
    })
}

/// Fills the grid on `val` and applies the error-constrained rule at `eps`.
pub fn select_error_constrained(
    models: &[(f64, Arc<SelectiveModel>)],
    t_values: &[f64],
    val: &LabeledDataset,
    eps: f64,
) -> Result<(Selection, SelectionGrid)> {
    let grid = SelectionGrid::build(models, t_values, val)?;
    Ok((select(&grid, SelectionCriterion::ErrorConstrained(eps))?, grid))
}

/// Fills the grid on `val` and applies the coverage-constrained rule at `rho`.
pub fn select_coverage_constrained(
    models: &[(f64, Arc<SelectiveModel>)],
    t_values: &[f64],
    val: &LabeledDataset,
    rho: f64,
) -> Result<(Selection, SelectionGrid)> {
    let grid = SelectionGrid::build(models, t_values, val)?;
    Ok((select(&grid, SelectionCriterion::CoverageConstrained(rho))?, grid))
}
