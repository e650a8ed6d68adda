//! Exhaustive solvers for the selective program and its one-sided relaxation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::family::DecisionSetFamily;
use crate::region::Region;

use super::class::{budget, CandidateTable, FiniteHypothesisClass};

/// Default bound on the number of K-tuples the selective solver may enumerate.
pub const DEFAULT_TUPLE_CAP: u128 = 10_000_000;

/// Per-class error budget split `α_k`, with `Σ α_k ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaAllocation {
    alphas: Vec<f64>,
}

impl AlphaAllocation {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::invalid("an allocation needs at least one class"));
        }
        if alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::invalid("allocations must be nonnegative"));
        }
        let total: f64 = alphas.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("allocations sum to {total} > 1")));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn num_classes(&self) -> usize {
        self.alphas.len()
    }

    /// Points of the face `Σ α_k = 1` whose coordinates are multiples of `step`.
    pub fn uniform_grid(num_classes: usize, step: f64) -> Result<Vec<Self>> {
        if !(step > 0.0) || step > 1.0 {
            return Err(Error::invalid("grid step must lie in (0, 1]"));
        }
        let parts = (1.0 / step).round() as usize;
        if ((parts as f64) * step - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("grid step must divide 1"));
        }
        Ok(compositions(parts, num_classes)
            .into_iter()
            .map(|c| Self {
                alphas: c.into_iter().map(|v| v as f64 / parts as f64).collect(),
            })
            .collect())
    }

    /// Default face grid: step 0.1 for two classes, 0.25 otherwise.
    pub fn default_grid(num_classes: usize) -> Vec<Self> {
        let step = if num_classes <= 2 { 0.1 } else { 0.25 };
        Self::uniform_grid(num_classes, step).expect("default steps divide 1")
    }

    /// Every split of the integer error budget `B = ⌊ε n⌋` into per-class counts, as
    /// `α_k = c_k / B`. Each one-sided level `α_k ε` then admits exactly `c_k` errors, so
    /// every count split a feasible tuple can realise is represented.
    pub fn count_grid(num_classes: usize, eps: f64, n: usize) -> Vec<Self> {
        let b = budget(eps, n);
        if b == 0 {
            return vec![Self {
                alphas: vec![1.0 / num_classes as f64; num_classes],
            }];
        }
        compositions(b, num_classes)
            .into_iter()
            .map(|c| Self {
                alphas: c.into_iter().map(|v| v as f64 / b as f64).collect(),
            })
            .collect()
    }
}

/// All ways to write `total` as an ordered sum of `parts` nonnegative integers, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(left - v, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

/// An optimiser of one of the oracle programs.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub family: DecisionSetFamily,
    /// Achieved objective: `P̂(S)` for one-sided problems, `Σ_k P̂(S_k)` for selective ones.
    pub value: f64,
    /// Raw error of the returned family on the solving dataset.
    pub error: f64,
    pub feasible: bool,
    pub alpha: Option<AlphaAllocation>,
    /// Candidate index per slot (`None` = empty set).
    pub choice: Vec<Option<usize>>,
}

fn region_of(class: &FiniteHypothesisClass, c: Option<usize>) -> Region {
    c.map_or(Region::Empty, |i| class.candidates()[i].clone())
}

fn check_level(level: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::invalid(format!("{what} must lie in [0, 1], got {level}")));
    }
    Ok(())
}

/// Index of the largest candidate with at most `allowed` negatives for class `k`.
fn best_one_sided(table: &CandidateTable, k: usize, allowed: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for c in 0..table.len() {
        if table.negatives(c, k) <= allowed && best.is_none_or(|b| table.size(c) > table.size(b)) {
            best = Some(c);
        }
    }
    best.filter(|&c| table.size(c) > 0)
}

/// `max P̂(S)` over the class subject to `P̂(S, y ≠ k) ≤ eps_k`. Returns the empty set when
/// nothing else is feasible. The family has `K` slots, all empty except slot `k`.
pub fn solve_osp_exact(
    data: &LabeledDataset,
    class: &FiniteHypothesisClass,
    k: usize,
    eps_k: f64,
) -> Result<OracleSolution> {
    check_level(eps_k, "eps_k")?;
    if k >= data.num_classes() {
        return Err(Error::invalid(format!("class {k} out of range")));
    }
    let table = CandidateTable::new(data, class)?;
    let c = best_one_sided(&table, k, budget(eps_k, table.n()));
    let mut choice = vec![None; data.num_classes()];
    choice[k] = c;
    let n = table.n() as f64;
    let (value, errors) = c.map_or((0.0, 0), |c| (table.size(c) as f64 / n, table.negatives(c, k)));
    let regions = choice.iter().map(|&c| region_of(class, c)).collect();
    Ok(OracleSolution {
        family: DecisionSetFamily::from_regions(data.dim(), regions, true)?,
        value,
        error: errors as f64 / n,
        feasible: true,
        alpha: None,
        choice,
    })
}

/// Exhaustive `max Σ_k P̂(S_k)` over K-tuples of the class (each slot may also be empty),
/// subject to `P̂(E) ≤ eps` and empirical pairwise disjointness.
pub fn solve_sc_exact(data: &LabeledDataset, class: &FiniteHypothesisClass, eps: f64) -> Result<OracleSolution> {
    solve_sc_exact_with_cap(data, class, eps, DEFAULT_TUPLE_CAP)
}

pub fn solve_sc_exact_with_cap(
    data: &LabeledDataset,
    class: &FiniteHypothesisClass,
    eps: f64,
    cap: u128,
) -> Result<OracleSolution> {
    check_level(eps, "eps")?;
    let k = data.num_classes();
    let required = (class.size() as u128 + 1)
        .checked_pow(k as u32)
        .unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::CapacityExceeded { required, cap });
    }
    let table = CandidateTable::new(data, class)?;
    let allowed = budget(eps, table.n());
    // suffix[j] bounds the coverage slots j.. can still add.
    let mut suffix = vec![0usize; k + 1];
    for j in (0..k).rev() {
        let slot_max = (0..table.len())
            .filter(|&c| table.negatives(c, j) <= allowed)
            .map(|c| table.size(c))
            .max()
            .unwrap_or(0);
        suffix[j] = suffix[j + 1] + slot_max;
    }

    let mut search = ScSearch {
        table: &table,
        allowed,
        suffix,
        chosen: Vec::with_capacity(k),
        best: None,
    };
    search.descend(0, 0);
    let (best_cov, best_err, choice) = search.best.expect("the all-empty tuple is always feasible");

    let regions = choice.iter().map(|&c| region_of(class, c)).collect();
    let n = table.n() as f64;
    Ok(OracleSolution {
        family: DecisionSetFamily::from_regions(data.dim(), regions, true)?,
        value: best_cov as f64 / n,
        error: best_err as f64 / n,
        feasible: true,
        alpha: None,
        choice,
    })
}

struct ScSearch<'a> {
    table: &'a CandidateTable,
    allowed: usize,
    suffix: Vec<usize>,
    chosen: Vec<Option<usize>>,
    best: Option<(usize, usize, Vec<Option<usize>>)>,
}

impl ScSearch<'_> {
    /// Depth-first over slots in lexicographic order (empty first, then candidate index),
    /// so the first tuple reaching the best coverage is the smallest in enumeration order.
    fn descend(&mut self, cov: usize, err: usize) {
        let k = self.table.num_classes();
        let slot = self.chosen.len();
        if slot == k {
            if self.best.as_ref().is_none_or(|b| cov > b.0) {
                self.best = Some((cov, err, self.chosen.clone()));
            }
            return;
        }
        if let Some(b) = &self.best {
            // Only strictly better completions matter; ties keep the earlier tuple.
            if cov + self.suffix[slot] <= b.0 {
                return;
            }
        }
        self.chosen.push(None);
        self.descend(cov, err);
        self.chosen.pop();
        for c in 0..self.table.len() {
            let size = self.table.size(c);
            if size == 0 {
                continue;
            }
            let e = err + self.table.negatives(c, slot);
            if e > self.allowed {
                continue;
            }
            if let Some(b) = &self.best {
                if cov + size + self.suffix[slot + 1] <= b.0 {
                    continue;
                }
            }
            if !self.chosen.iter().flatten().all(|&o| self.table.disjoint(o, c)) {
                continue;
            }
            self.chosen.push(Some(c));
            self.descend(cov + size, e);
            self.chosen.pop();
        }
    }
}

/// One allocation of the α-sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaOutcome {
    pub alpha: AlphaAllocation,
    /// The one-sided optimisers `T_k^α` (candidate indices, `None` = empty).
    pub raw: Vec<Option<usize>>,
    pub coverage: f64,
    pub error: f64,
    /// Mass of points lying in two or more `T_k^α`.
    pub overlap: f64,
}

/// Result of the α-sweep: the best allocation and every allocation's outcome.
#[derive(Debug, Clone)]
pub struct DecoupledSolution {
    pub best: OracleSolution,
    pub best_index: usize,
    pub outcomes: Vec<AlphaOutcome>,
}

/// `S_k = T_k \ ∪_{k'<k} T_{k'}` for raw one-sided sets `T`.
pub fn decouple(raw: &[Region]) -> Vec<Region> {
    raw.iter()
        .enumerate()
        .map(|(k, t)| t.clone().minus(raw[..k].to_vec()))
        .collect()
}

/// For each allocation solves the K one-sided problems at levels `α_k·eps`, removes
/// overlaps toward the smallest label and keeps the allocation with largest coverage
/// (earliest on ties).
pub fn solve_osp_decoupled(
    data: &LabeledDataset,
    class: &FiniteHypothesisClass,
    eps: f64,
    alpha_grid: &[AlphaAllocation],
) -> Result<DecoupledSolution> {
    check_level(eps, "eps")?;
    if alpha_grid.is_empty() {
        return Err(Error::invalid("the allocation grid is empty"));
    }
    let k = data.num_classes();
    if let Some(a) = alpha_grid.iter().find(|a| a.num_classes() != k) {
        return Err(Error::invalid(format!(
            "allocation over {} classes for a {k}-class dataset",
            a.num_classes()
        )));
    }
    let table = CandidateTable::new(data, class)?;
    let n = table.n();
    let mut memo: HashMap<(usize, usize), Option<usize>> = HashMap::new();
    let mut outcomes = Vec::with_capacity(alpha_grid.len());
    let mut best_index = 0;
    for (ai, alpha) in alpha_grid.iter().enumerate() {
        let raw: Vec<Option<usize>> = (0..k)
            .map(|j| {
                let allowed = budget(alpha.alphas()[j] * eps, n);
                *memo
                    .entry((j, allowed))
                    .or_insert_with(|| best_one_sided(&table, j, allowed))
            })
            .collect();
        let regions: Vec<Region> = raw.iter().map(|&c| region_of(class, c)).collect();
        let (mut accepted, mut errors, mut overlapped) = (0usize, 0usize, 0usize);
        for e in data {
            let mut first = None;
            let mut count = 0;
            for (j, r) in regions.iter().enumerate() {
                if r.contains(&e.features) {
                    count += 1;
                    first.get_or_insert(j);
                }
            }
            if let Some(j) = first {
                accepted += 1;
                errors += usize::from(e.label != j);
            }
            overlapped += usize::from(count >= 2);
        }
        let nf = n as f64;
        outcomes.push(AlphaOutcome {
            alpha: alpha.clone(),
            raw,
            coverage: accepted as f64 / nf,
            error: errors as f64 / nf,
            overlap: overlapped as f64 / nf,
        });
        if outcomes[ai].coverage > outcomes[best_index].coverage {
            best_index = ai;
        }
    }
    let win = &outcomes[best_index];
    let raw_regions: Vec<Region> = win.raw.iter().map(|&c| region_of(class, c)).collect();
    let best = OracleSolution {
        family: DecisionSetFamily::from_regions(data.dim(), decouple(&raw_regions), true)?,
        value: win.coverage,
        error: win.error,
        feasible: win.error <= eps + 1e-12,
        alpha: Some(win.alpha.clone()),
        choice: win.raw.clone(),
    };
    Ok(DecoupledSolution {
        best,
        best_index,
        outcomes,
    })
}

/// Fraction of points lying in at least two of the given sets.
pub fn overlap_mass(sets: &[Region], data: &LabeledDataset) -> Result<f64> {
    if sets.len() < 2 {
        return Err(Error::invalid("overlap needs at least two sets"));
    }
    if data.is_empty() {
        return Err(Error::invalid("overlap of an empty dataset"));
    }
    if let Some(r) = sets.iter().find(|r| r.min_dim() > data.dim()) {
        return Err(Error::DimensionMismatch {
            expected: r.min_dim(),
            got: data.dim(),
        });
    }
    let hits = data
        .iter()
        .filter(|e| sets.iter().filter(|r| r.contains(&e.features)).count() >= 2)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
