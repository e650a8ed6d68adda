//! Translations between gated predictors, decision sets and confidence sets.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::family::DecisionSetFamily;
use crate::region::Region;

/// `S_k = Π_k ∩ Γ`. The `Π_k` must partition every point of `reference`.
pub fn gating_to_sets(
    dim: usize,
    gate: Region,
    predictors: Vec<Region>,
    reference: &LabeledDataset,
) -> Result<DecisionSetFamily> {
    if reference.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: reference.dim(),
        });
    }
    for (i, e) in reference.iter().enumerate() {
        let hits = predictors.iter().filter(|p| p.contains(&e.features)).count();
        if hits != 1 {
            return Err(Error::invalid(format!(
                "predictor sets do not partition the space: point {i} lies in {hits} of them"
            )));
        }
    }
    let sets = predictors
        .into_iter()
        .map(|p| Region::Intersection(vec![p, gate.clone()]))
        .collect();
    DecisionSetFamily::from_regions(dim, sets, true)
}

/// `C_k = (∪_{k'≠k} S_{k'})^c = S_k ∪ R` for a disjoint explicit family; disjointness is
/// also checked on `reference`.
pub fn sets_to_confidence(family: &DecisionSetFamily, reference: &LabeledDataset) -> Result<Vec<Region>> {
    let regions = family
        .regions()
        .ok_or_else(|| Error::invalid("confidence sets need an explicit-region family"))?;
    if !family.is_disjoint() || !family.is_empirically_disjoint(reference)? {
        return Err(Error::invalid("confidence sets need a disjoint family"));
    }
    Ok((0..regions.len())
        .map(|k| {
            let others: Vec<Region> = regions
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, r)| r.clone())
                .collect();
            Region::Union(others).complement()
        })
        .collect())
}

/// Inverse of [`sets_to_confidence`]: `S_k = C_k \ ∪_{k'≠k} C_{k'}`.
pub fn confidence_to_sets(dim: usize, confidence: &[Region]) -> Result<DecisionSetFamily> {
    let sets = (0..confidence.len())
        .map(|k| {
            let others = confidence
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, r)| r.clone())
                .collect();
            confidence[k].clone().minus(others)
        })
        .collect();
    DecisionSetFamily::from_regions(dim, sets, true)
}
