//! Two-timescale stochastic gradient descent-ascent on the one-sided Lagrangian.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;
use crate::error::Error;
use crate::net::{warm_start, BackboneSpec, FitConfig, Optimizer, OptimizerKind, SelectiveModel};

use super::losses::{LagrangianState, OspLagrangian, OspTerms};

/// Multiply both rates by `factor` from epoch `epoch` (0-indexed) onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub factor: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mu: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Descent rate for head weights and slacks.
    pub lr_min: f64,
    /// Ascent rate for the multipliers.
    pub lr_max: f64,
    pub lr_decay: Option<LrDecay>,
    /// Epochs between backbone updates.
    pub backbone_update_interval: usize,
    pub seed: u64,
    pub warm_start_epochs: usize,
    pub warm_start_lr: f64,
    pub optimizer: OptimizerKind,
    /// Cap on every `λ_k`; `None` means `10 μ`.
    pub lambda_max: Option<f64>,
    pub ascent: bool,
    /// Use the unrestricted objective `L̃_k`.
    pub unrestricted: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            epochs: 200,
            batch_size: 128,
            lr_min: 1e-3,
            lr_max: 1e-4,
            lr_decay: Some(LrDecay { factor: 0.1, epoch: 50 }),
            backbone_update_interval: 20,
            seed: 0,
            warm_start_epochs: 50,
            warm_start_lr: 0.05,
            optimizer: OptimizerKind::Sgd,
            lambda_max: None,
            ascent: true,
            unrestricted: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let rates = [self.lr_min, self.lr_max, self.warm_start_lr];
        if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidInput("learning rates must be positive".into()));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidInput("mu must be finite and nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if self.backbone_update_interval == 0 {
            return Err(Error::InvalidInput("backbone update interval must be at least 1".into()));
        }
        if let Some(d) = self.lr_decay {
            if !(d.factor > 0.0) || !d.factor.is_finite() {
                return Err(Error::InvalidInput("decay factor must be positive".into()));
            }
        }
        if let Some(cap) = self.lambda_max {
            if !(cap >= 0.0) {
                return Err(Error::InvalidInput("lambda cap must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn lambda_cap(&self) -> f64 {
        self.lambda_max.unwrap_or(10.0 * self.mu)
    }

    /// Rate multiplier in effect during `epoch` (0-indexed).
    pub fn rate_scale(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) if epoch >= d.epoch => d.factor,
            _ => 1.0,
        }
    }

    pub fn warm_start_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.warm_start_epochs,
            lr: self.warm_start_lr,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer: self.optimizer,
        }
    }
}

/// Full-training-set values after an epoch (epoch 0 is the starting point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub restricted_sum: f64,
    pub constraints: Vec<f64>,
    pub lagrangian: f64,
    pub lambdas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Minibatches of this epoch without a class-k point.
    pub absent_positive: Vec<usize>,
    /// Minibatches of this epoch with only class-k points.
    pub absent_negative: Vec<usize>,
}

impl EpochRecord {
    pub fn constraint_sum(&self) -> f64 {
        self.constraints.iter().sum()
    }
}

pub type TrainLog = Vec<EpochRecord>;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SelectiveModel,
    pub state: LagrangianState,
    pub log: TrainLog,
}

#[derive(Debug, Clone, Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] Error),
    /// A loss became non-finite; carries the state at the end of the last finite epoch.
    #[error("training diverged in epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        source: Error,
        checkpoint: Box<TrainOutcome>,
    },
}

fn evaluate_record(
    model: &SelectiveModel,
    data: &LabeledDataset,
    state: &LagrangianState,
    cfg: &TrainConfig,
    epoch: usize,
    absent: (Vec<usize>, Vec<usize>),
) -> Result<EpochRecord, Error> {
    let labels: Vec<usize> = data.labels().collect();
    let trace = model.forward_trace(data.iter().map(|e| e.features.as_slice()))?;
    let terms = OspTerms::compute(&trace.scores(&labels, model.num_outputs()));
    let lagrangian = terms.lagrangian(state, cfg.unrestricted);
    if !lagrangian.is_finite() {
        return Err(Error::NonFinite { term: "lagrangian".into() });
    }
    Ok(EpochRecord {
        epoch,
        restricted_sum: terms.restricted_sum(),
        constraints: terms.constraint,
        lagrangian,
        lambdas: state.lambdas.clone(),
        phis: state.phis.clone(),
        absent_positive: absent.0,
        absent_negative: absent.1,
    })
}

/// Warm start followed by [`sgda_from`].
pub fn sgda_train(data: &LabeledDataset, spec: &BackboneSpec, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let model = warm_start(data, spec, data.num_classes(), &cfg.warm_start_config())?;
    sgda_from(model, data, cfg)
}

/// Runs the descent-ascent loop from an already initialised model.
///
/// Per minibatch: head weights and slacks take a descent step at `lr_min`, multipliers an
/// ascent step at `lr_max` (both from the same pre-step values), then `φ ≥ 0` and
/// `λ ∈ [0, λ_max]` are restored by projection. Backbone descent steps are accumulated and
/// applied at the end of every `backbone_update_interval`-th epoch.
pub fn sgda_from(mut model: SelectiveModel, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()).into());
    }
    if data.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.dim(),
        }
        .into());
    }
    let k = model.num_outputs();
    if data.num_classes() > k {
        return Err(Error::InvalidInput("dataset has more classes than the model has outputs".into()).into());
    }
    let mut state = LagrangianState::new(k, cfg.mu)?;
    let cap = cfg.lambda_cap();
    let mut log = vec![evaluate_record(&model, data, &state, cfg, 0, (vec![0; k], vec![0; k]))?];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51_7cc1_b727_220a);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut opt_backbone = Optimizer::new(cfg.optimizer, model.backbone_param_count());
    let mut opt_head = Optimizer::new(cfg.optimizer, model.head().param_count());
    let mut pending = vec![0.0; model.backbone_param_count()];
    let examples = data.examples();
    let mut labels = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let checkpoint = (model.clone(), state.clone());
        let scale = cfg.rate_scale(epoch);
        let (lr_min, lr_max) = (cfg.lr_min * scale, cfg.lr_max * scale);
        let mut absent_pos = vec![0usize; k];
        let mut absent_neg = vec![0usize; k];

        order.shuffle(&mut rng);
        let step = (|| -> Result<(), Error> {
            for chunk in order.chunks(cfg.batch_size) {
                labels.clear();
                labels.extend(chunk.iter().map(|&i| examples[i].label));
                let trace = model.forward_trace(chunk.iter().map(|&i| examples[i].features.as_slice()))?;
                let scores = trace.scores(&labels, k);
                let terms = OspTerms::compute(&scores);
                let loss = OspLagrangian {
                    state: state.clone(),
                    unrestricted: cfg.unrestricted,
                };
                let (value, dlogits) = crate::net::BatchLoss::value_and_logit_grad(&loss, &scores)?;
                if !value.is_finite() || dlogits.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite { term: "lagrangian".into() });
                }
                let grads = model.backward_trace(&trace, &dlogits);

                let dh = opt_head.increment(&grads.head_flat(), lr_min);
                model.add_to_head(&dh);
                let db = opt_backbone.increment(&grads.backbone_flat(), lr_min);
                for (p, d) in pending.iter_mut().zip(&db) {
                    *p += d;
                }

                for j in 0..k {
                    absent_pos[j] += usize::from(terms.positives[j] == 0);
                    absent_neg[j] += usize::from(terms.negatives[j] == 0);
                    let phi_grad = state.mu - state.lambdas[j];
                    let lambda_grad = terms.constraint[j] - state.phis[j];
                    state.phis[j] = (state.phis[j] - lr_min * phi_grad).max(0.0);
                    // A batch with no negatives carries no information about C̃_k.
                    if cfg.ascent && terms.negatives[j] > 0 {
                        state.lambdas[j] = (state.lambdas[j] + lr_max * lambda_grad).clamp(0.0, cap);
                    }
                }
            }
            Ok(())
        })();
        if let Err(source) = step {
            let (model, state) = checkpoint;
            return Err(TrainError::Diverged {
                epoch: epoch + 1,
                source,
                checkpoint: Box::new(TrainOutcome { model, state, log }),
            });
        }

        if (epoch + 1) % cfg.backbone_update_interval == 0 {
            model.add_to_backbone(&pending);
            pending.iter_mut().for_each(|p| *p = 0.0);
        }
        match evaluate_record(&model, data, &state, cfg, epoch + 1, (absent_pos, absent_neg)) {
            Ok(r) => log.push(r),
            Err(source) => {
                let (model, state) = checkpoint;
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    source,
                    checkpoint: Box::new(TrainOutcome { model, state, log }),
                });
            }
        }
    }
    Ok(TrainOutcome { model, state, log })
}
