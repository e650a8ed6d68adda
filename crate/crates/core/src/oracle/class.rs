//! Finite hypothesis classes and their cached statistics on a dataset.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::region::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HypothesisKind {
    /// `{x_f > t}` over a grid of cuts.
    UpperThreshold,
    /// `{x_f ≤ t}` over a grid of cuts.
    LowerThreshold,
    /// Both threshold directions over a common grid of cuts.
    Threshold,
    /// `{lo < x_f ≤ hi}` for every ordered pair of cuts.
    Interval,
    ExplicitSetList,
}

/// A finite, explicitly enumerated class of candidate sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteHypothesisClass {
    kind: HypothesisKind,
    candidates: Vec<Region>,
}

impl FiniteHypothesisClass {
    pub fn upper_thresholds(feature: usize, cuts: &[f64]) -> Self {
        Self {
            kind: HypothesisKind::UpperThreshold,
            candidates: cuts.iter().map(|&c| Region::above(feature, c)).collect(),
        }
    }

    pub fn lower_thresholds(feature: usize, cuts: &[f64]) -> Self {
        Self {
            kind: HypothesisKind::LowerThreshold,
            candidates: cuts.iter().map(|&c| Region::at_most(feature, c)).collect(),
        }
    }

    /// Upper thresholds at every cut, followed by lower thresholds at every cut.
    pub fn thresholds(feature: usize, cuts: &[f64]) -> Self {
        let mut candidates = Self::upper_thresholds(feature, cuts).candidates;
        candidates.extend(cuts.iter().map(|&c| Region::at_most(feature, c)));
        Self {
            kind: HypothesisKind::Threshold,
            candidates,
        }
    }

    /// Every interval `(cuts[i], cuts[j]]` with `i < j`, cuts sorted ascending first.
    pub fn intervals(feature: usize, cuts: &[f64]) -> Self {
        let mut sorted = cuts.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut candidates = Vec::new();
        for (i, &lo) in sorted.iter().enumerate() {
            for &hi in &sorted[i + 1..] {
                candidates.push(Region::interval(feature, lo, hi));
            }
        }
        Self {
            kind: HypothesisKind::Interval,
            candidates,
        }
    }

    pub fn explicit(sets: Vec<Region>) -> Self {
        Self {
            kind: HypothesisKind::ExplicitSetList,
            candidates: sets,
        }
    }

    /// Cuts realising every distinct threshold behaviour on `data` along `feature`:
    /// `−∞`, each midpoint between consecutive distinct values, and `+∞`.
    pub fn data_cuts(data: &LabeledDataset, feature: usize) -> Vec<f64> {
        let mut values: Vec<f64> = data.iter().map(|e| e.features[feature]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut cuts = Vec::with_capacity(values.len() + 1);
        cuts.push(f64::NEG_INFINITY);
        cuts.extend(values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        cuts.push(f64::INFINITY);
        cuts
    }

    pub fn kind(&self) -> HypothesisKind {
        self.kind
    }

    pub fn candidates(&self) -> &[Region] {
        &self.candidates
    }

    pub fn size(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn min_dim(&self) -> usize {
        self.candidates.iter().map(Region::min_dim).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Empty,
    All,
    Axis { feature: usize, lo: f64, hi: f64 },
    Other,
}

/// Points sorted along one feature with per-class prefix counts.
#[derive(Debug)]
struct SortedAxis {
    values: Vec<f64>,
    /// `prefix[i * K + j]` = number of class-`j` points among the first `i` sorted values.
    prefix: Vec<u32>,
    k: usize,
}

impl SortedAxis {
    fn new(data: &LabeledDataset, feature: usize) -> Self {
        let k = data.num_classes();
        let mut pts: Vec<(f64, usize)> = data.iter().map(|e| (e.features[feature], e.label)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = vec![0u32; (pts.len() + 1) * k];
        for (i, &(_, y)) in pts.iter().enumerate() {
            let (head, tail) = prefix.split_at_mut((i + 1) * k);
            tail[..k].copy_from_slice(&head[i * k..]);
            tail[y] += 1;
        }
        Self {
            values: pts.into_iter().map(|p| p.0).collect(),
            prefix,
            k,
        }
    }

    fn rank(&self, cut: f64) -> usize {
        self.values.partition_point(|&v| v <= cut)
    }

    /// Per-class counts of points in `(lo, hi]`.
    fn class_counts(&self, lo: f64, hi: f64) -> Vec<usize> {
        if !(lo < hi) {
            return vec![0; self.k];
        }
        let (a, b) = (self.rank(lo), self.rank(hi));
        (0..self.k)
            .map(|j| (self.prefix[b * self.k + j] - self.prefix[a * self.k + j]) as usize)
            .collect()
    }

    fn count(&self, lo: f64, hi: f64) -> usize {
        if !(lo < hi) {
            return 0;
        }
        self.rank(hi) - self.rank(lo)
    }
}

/// Sizes, per-class counts and pairwise empirical disjointness of a class's candidates.
#[derive(Debug)]
pub(crate) struct CandidateTable {
    n: usize,
    num_classes: usize,
    size: Vec<usize>,
    class_counts: Vec<Vec<usize>>,
    shapes: Vec<Shape>,
    axes: HashMap<usize, SortedAxis>,
    bits: Option<Vec<Vec<u64>>>,
}

fn shape_of(region: &Region) -> Shape {
    match region {
        Region::Empty => Shape::Empty,
        Region::Everything => Shape::All,
        r => match r.as_axis_interval() {
            Some((feature, lo, hi)) => Shape::Axis { feature, lo, hi },
            None => Shape::Other,
        },
    }
}

impl CandidateTable {
    pub(crate) fn new(data: &LabeledDataset, class: &FiniteHypothesisClass) -> Result<Self> {
        if class.is_empty() {
            return Err(Error::invalid("the hypothesis class has no candidates"));
        }
        if data.is_empty() {
            return Err(Error::invalid("oracle needs a nonempty dataset"));
        }
        if class.min_dim() > data.dim() {
            return Err(Error::DimensionMismatch {
                expected: class.min_dim(),
                got: data.dim(),
            });
        }
        let k = data.num_classes();
        let shapes: Vec<Shape> = class.candidates.iter().map(shape_of).collect();
        let mut axes = HashMap::new();
        for s in &shapes {
            if let Shape::Axis { feature, .. } = *s {
                axes.entry(feature).or_insert_with(|| SortedAxis::new(data, feature));
            }
        }
        let needs_bits = shapes.iter().any(|s| matches!(s, Shape::Other)) || axes.len() > 1;
        let words = data.len().div_ceil(64);
        let bits = needs_bits.then(|| {
            class
                .candidates
                .iter()
                .map(|r| {
                    let mut b = vec![0u64; words];
                    for (i, e) in data.iter().enumerate() {
                        if r.contains(&e.features) {
                            b[i / 64] |= 1 << (i % 64);
                        }
                    }
                    b
                })
                .collect::<Vec<_>>()
        });
        let totals = data.class_counts();
        let mut class_counts = Vec::with_capacity(shapes.len());
        for (c, s) in shapes.iter().enumerate() {
            let counts = match *s {
                Shape::Empty => vec![0; k],
                Shape::All => totals.clone(),
                Shape::Axis { feature, lo, hi } => axes[&feature].class_counts(lo, hi),
                Shape::Other => {
                    let b = &bits.as_ref().expect("bitsets built for general regions")[c];
                    let mut counts = vec![0; k];
                    for (i, e) in data.iter().enumerate() {
                        if b[i / 64] >> (i % 64) & 1 == 1 {
                            counts[e.label] += 1;
                        }
                    }
                    counts
                }
            };
            class_counts.push(counts);
        }
        Ok(Self {
            n: data.len(),
            num_classes: k,
            size: class_counts.iter().map(|c| c.iter().sum()).collect(),
            class_counts,
            shapes,
            axes,
            bits,
        })
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub(crate) fn len(&self) -> usize {
        self.size.len()
    }

    pub(crate) fn size(&self, c: usize) -> usize {
        self.size[c]
    }

    /// `|c ∩ {y ≠ k}|`.
    pub(crate) fn negatives(&self, c: usize, k: usize) -> usize {
        self.size[c] - self.class_counts[c][k]
    }

    /// True when no point of the dataset lies in both candidates.
    pub(crate) fn disjoint(&self, a: usize, b: usize) -> bool {
        if self.size[a] == 0 || self.size[b] == 0 {
            return true;
        }
        match (self.shapes[a], self.shapes[b]) {
            (Shape::All, _) | (_, Shape::All) => false,
            (
                Shape::Axis { feature: fa, lo: la, hi: ha },
                Shape::Axis { feature: fb, lo: lb, hi: hb },
            ) if fa == fb => self.axes[&fa].count(la.max(lb), ha.min(hb)) == 0,
            _ => {
                let bits = self.bits.as_ref().expect("bitsets built whenever shapes differ in feature");
                bits[a].iter().zip(&bits[b]).all(|(x, y)| x & y == 0)
            }
        }
    }
}

/// Largest count `c` with `c / n ≤ level` (within 1e-12).
pub(crate) fn budget(level: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut c = (level * nf).floor().clamp(0.0, nf) as usize;
    while c < n && (c + 1) as f64 / nf <= level + 1e-12 {
        c += 1;
    }
    while c > 0 && c as f64 / nf > level + 1e-12 {
        c -= 1;
    }
    c
}
