//! Explicit subsets of the feature space.
//!
//! Thresholds follow the set notation used for finite hypothesis classes: an upper
//! threshold is the open half-line `{x_f > cut}`, a lower threshold the closed half-line
//! `{x_f ≤ cut}`, and an interval is `{lo < x_f ≤ hi}`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Empty,
    Everything,
    Above { feature: usize, cut: f64 },
    AtMost { feature: usize, cut: f64 },
    Interval { feature: usize, lo: f64, hi: f64 },
    /// A finite set of points, matched by exact equality of feature vectors.
    Points(Vec<Vec<f64>>),
    Complement(Box<Region>),
    Intersection(Vec<Region>),
    Union(Vec<Region>),
}

impl Region {
    pub fn above(feature: usize, cut: f64) -> Self {
        Region::Above { feature, cut }
    }

    pub fn at_most(feature: usize, cut: f64) -> Self {
        Region::AtMost { feature, cut }
    }

    pub fn interval(feature: usize, lo: f64, hi: f64) -> Self {
        Region::Interval { feature, lo, hi }
    }

    pub fn complement(self) -> Self {
        Region::Complement(Box::new(self))
    }

    /// `self \ (r_1 ∪ r_2 ∪ ...)`.
    pub fn minus(self, removed: Vec<Region>) -> Self {
        if removed.is_empty() {
            return self;
        }
        Region::Intersection(vec![self, Region::Union(removed).complement()])
    }

    /// Membership test. Callers must have checked that `x` covers every referenced feature.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Empty => false,
            Region::Everything => true,
            Region::Above { feature, cut } => x[*feature] > *cut,
            Region::AtMost { feature, cut } => x[*feature] <= *cut,
            Region::Interval { feature, lo, hi } => *lo < x[*feature] && x[*feature] <= *hi,
            Region::Points(points) => points.iter().any(|p| p.as_slice() == x),
            Region::Complement(inner) => !inner.contains(x),
            Region::Intersection(parts) => parts.iter().all(|r| r.contains(x)),
            Region::Union(parts) => parts.iter().any(|r| r.contains(x)),
        }
    }

    /// Smallest feature dimension this region can be evaluated on.
    pub fn min_dim(&self) -> usize {
        match self {
            Region::Empty | Region::Everything => 0,
            Region::Above { feature, .. }
            | Region::AtMost { feature, .. }
            | Region::Interval { feature, .. } => feature + 1,
            Region::Points(points) => points.iter().map(Vec::len).max().unwrap_or(0),
            Region::Complement(inner) => inner.min_dim(),
            Region::Intersection(parts) | Region::Union(parts) => {
                parts.iter().map(Region::min_dim).max().unwrap_or(0)
            }
        }
    }

    /// The half-open interval `(lo, hi]` on one axis this region describes, if it is a
    /// plain one-dimensional threshold or interval. `Empty` and `Everything` have no axis.
    pub fn as_axis_interval(&self) -> Option<(usize, f64, f64)> {
        match *self {
            Region::Above { feature, cut } => Some((feature, cut, f64::INFINITY)),
            Region::AtMost { feature, cut } => Some((feature, f64::NEG_INFINITY, cut)),
            Region::Interval { feature, lo, hi } => Some((feature, lo, hi)),
            _ => None,
        }
    }
}
