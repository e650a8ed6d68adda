//! The uniform-feature example with `P(Y = class 0 | X = x) = x` on `[0, 1]`.
//!
//! Class index 0 is the label drawn with probability `x`; index 1 the complementary label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, LabeledExample};
use crate::error::{Error, Result};
use crate::region::Region;

use super::class::FiniteHypothesisClass;
use super::solve::solve_osp_exact;

/// Population optimum of the selective program over single threshold sets:
/// `(2√ε, 1 − √ε, √ε)` with `S_0 = {x > 1 − √ε}` and `S_1 = {x ≤ √ε}`.
pub fn analytic_example_coverage(eps: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..0.25).contains(&eps) {
        return Err(Error::invalid(format!("eps must lie in [0, 1/4), got {eps}")));
    }
    let r = eps.sqrt();
    Ok((2.0 * r, 1.0 - r, r))
}

/// Population optimum of the one-sided problem for class 0 over upper thresholds:
/// the largest `{x > c}` with `(1 − c)²/2 ≤ ε`, of mass `√(2ε)` (capped at 1).
pub fn analytic_one_sided_value(eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("eps must lie in [0, 1], got {eps}")));
    }
    Ok((2.0 * eps).sqrt().min(1.0))
}

/// `n` draws with `X ~ U[0, 1]` and label 0 with probability `X`, label 1 otherwise.
pub fn sample_analytic_example(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let u: f64 = rng.random();
            LabeledExample::new(vec![x], usize::from(u >= x))
        })
        .collect();
    LabeledDataset::with_dim(examples, 2, 1)
}

/// `(P(X ∈ S), P(X ∈ S, Y = 0), P(X ∈ S, Y = 1))` for a one-axis region on feature 0.
pub fn analytic_population(region: &Region) -> Result<(f64, f64, f64)> {
    let (lo, hi) = match region {
        Region::Empty => return Ok((0.0, 0.0, 0.0)),
        Region::Everything => (0.0, 1.0),
        r => match r.as_axis_interval() {
            Some((0, lo, hi)) => (lo, hi),
            _ => return Err(Error::invalid("population values need a feature-0 interval")),
        },
    };
    let (a, b) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
    if a >= b {
        return Ok((0.0, 0.0, 0.0));
    }
    let mass = b - a;
    let class0 = (b * b - a * a) / 2.0;
    Ok((mass, class0, mass - class0))
}

/// Median deviations of one-sided ERM at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub n: usize,
    pub seeds: usize,
    /// Median of `|P(S) − L(ε)|` over seeds.
    pub coverage_deviation: f64,
    /// Median of `max(0, P(S, Y ≠ 0) − ε)` over seeds.
    pub violation: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Solves the class-0 one-sided problem by ERM over data-cut thresholds (both directions)
/// on fresh samples and compares the chosen set's population mass and error with the
/// population optimum.
pub fn erm_feasibility_trend(eps: f64, n_list: &[usize], seeds_per_n: usize, base_seed: u64) -> Result<Vec<TrendRow>> {
    if n_list.is_empty() || seeds_per_n == 0 {
        return Err(Error::invalid("need at least one sample size and one seed"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sample sizes must be strictly increasing"));
    }
    let truth = analytic_one_sided_value(eps)?;
    n_list
        .iter()
        .map(|&n| {
            let mut dev = Vec::with_capacity(seeds_per_n);
            let mut vio = Vec::with_capacity(seeds_per_n);
            for s in 0..seeds_per_n {
                let seed = base_seed
                    .wrapping_mul(1_000_003)
                    .wrapping_add((n as u64) << 20)
                    .wrapping_add(s as u64);
                let data = sample_analytic_example(n, seed)?;
                let class = FiniteHypothesisClass::thresholds(0, &FiniteHypothesisClass::data_cuts(&data, 0));
                let sol = solve_osp_exact(&data, &class, 0, eps)?;
                let region = &sol.family.regions().expect("oracle families are explicit")[0];
                let (mass, _, wrong) = analytic_population(region)?;
                dev.push((mass - truth).abs());
                vio.push((wrong - eps).max(0.0));
            }
            Ok(TrendRow {
                n,
                seeds: seeds_per_n,
                coverage_deviation: median(&mut dev),
                violation: median(&mut vio),
            })
        })
        .collect()
}
