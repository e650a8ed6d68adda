//! Plain minibatch minimisation, used for the cross-entropy warm start.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

use super::backward::backward_rows;
use super::loss::{BatchLoss, CrossEntropy};
use super::model::{BackboneSpec, SelectiveModel};
use super::optim::{Optimizer, OptimizerKind};

/// Settings for fitting every parameter of a model to a fixed loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

/// Seeded permutation stream used to draw minibatches, one shuffle per epoch.
fn shuffle_stream(seed: u64) -> ChaCha8Rng {
    // Offset so batches are not correlated with the stream that drew the initial weights.
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Minimises `loss` over all parameters of `model` by minibatch steps.
pub fn fit(model: &mut SelectiveModel, data: &LabeledDataset, loss: &dyn BatchLoss, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    if cfg.epochs == 0 {
        return Ok(());
    }
    let mut rng = shuffle_stream(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut opt_backbone = Optimizer::new(cfg.optimizer, model.backbone_param_count());
    let mut opt_head = Optimizer::new(cfg.optimizer, model.head().param_count());
    let examples = data.examples();
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            labels.clear();
            labels.extend(chunk.iter().map(|&i| examples[i].label));
            let rows = chunk.iter().map(|&i| examples[i].features.as_slice());
            let (_, g) = backward_rows(model, rows, &labels, loss)?;
            let db = opt_backbone.increment(&g.backbone_flat(), cfg.lr);
            let dh = opt_head.increment(&g.head_flat(), cfg.lr);
            model.add_to_backbone(&db);
            model.add_to_head(&dh);
        }
    }
    Ok(())
}

/// Random initialisation followed by cross-entropy training of the full model.
pub fn warm_start(
    data: &LabeledDataset,
    spec: &BackboneSpec,
    num_classes: usize,
    cfg: &FitConfig,
) -> Result<SelectiveModel> {
    if data.is_empty() {
        return Err(Error::invalid("warm start needs a nonempty dataset"));
    }
    if data.dim() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            got: data.dim(),
        });
    }
    if data.num_classes() > num_classes {
        return Err(Error::invalid("dataset has more classes than the model has outputs"));
    }
    let mut model = SelectiveModel::new(spec.clone(), num_classes, cfg.seed)?;
    fit(&mut model, data, &CrossEntropy, cfg)?;
    Ok(model)
}

/// Fraction of points whose argmax score equals the label.
pub fn accuracy(model: &SelectiveModel, data: &LabeledDataset) -> Result<f64> {
    let mut correct = 0;
    for e in data {
        if crate::family::argmax(&model.forward(&e.features)?) == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}
