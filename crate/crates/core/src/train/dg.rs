//! Deep Gamblers baseline: a `K + 1`-output network trained on the gamblers loss.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::{fit, BackboneSpec, FitConfig, SelectiveModel};

use super::losses::DgLoss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGConfig {
    /// Payoff `o ∈ [1, K)`.
    pub payoff: f64,
    /// Thresholds on `f_?` scanned during selection.
    pub thresholds: Vec<f64>,
}

impl DGConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        DgLoss::new(self.payoff, num_classes)?;
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        Ok(())
    }
}

/// Randomly initialises a model with an extra abstention output and fits the gamblers loss.
pub fn dg_train(data: &LabeledDataset, spec: &BackboneSpec, cfg: &DGConfig, fit_cfg: &FitConfig) -> Result<SelectiveModel> {
    let k = data.num_classes();
    cfg.validate(k)?;
    if data.dim() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            got: data.dim(),
        });
    }
    let mut model = SelectiveModel::new(spec.clone(), k + 1, fit_cfg.seed)?;
    fit(&mut model, data, &DgLoss::new(cfg.payoff, k)?, fit_cfg)?;
    Ok(model)
}
