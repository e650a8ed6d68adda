//! The one-sided surrogate losses, their Lagrangian, and the Deep Gamblers loss.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::net::{
    complement, ensure_finite, logit_grad_from_prob_grad, loss_value, neg_log, BatchLoss, BatchScores, SelectiveModel,
};

/// Multipliers `λ_k`, slacks `φ_k` and the budget multiplier `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub lambdas: Vec<f64>,
    pub phis: Vec<f64>,
    pub mu: f64,
}

impl LagrangianState {
    /// Starts at `λ_k = μ`, `φ_k = 0`, where the slack coefficients `μ − λ_k` vanish.
    pub fn new(num_classes: usize, mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::invalid(format!("mu must be finite and nonnegative, got {mu}")));
        }
        Ok(Self {
            lambdas: vec![mu; num_classes],
            phis: vec![0.0; num_classes],
            mu,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.len() != self.phis.len() {
            return Err(Error::invalid("lambda and phi lengths differ"));
        }
        if self.lambdas.iter().chain(&self.phis).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("multipliers and slacks must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Per-class surrogate terms of one batch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OspTerms {
    /// `L̃_k^res`: mean of `−log f_k` over class-`k` points (0 when there are none).
    pub restricted: Vec<f64>,
    /// `C̃_k`: mean of `−log(1 − f_k)` over non-`k` points (0 when there are none).
    pub constraint: Vec<f64>,
    /// `L̃_k`: mean of `−log f_k` over all points.
    pub unrestricted: Vec<f64>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl OspTerms {
    pub fn compute(scores: &BatchScores<'_>) -> Self {
        let k = scores.width;
        let n = scores.rows();
        let mut t = Self {
            restricted: vec![0.0; k],
            constraint: vec![0.0; k],
            unrestricted: vec![0.0; k],
            positives: vec![0; k],
            negatives: vec![0; k],
        };
        for i in 0..n {
            let p = scores.probs_row(i);
            let y = scores.labels[i];
            for j in 0..k {
                let pos = neg_log(p[j]).0;
                t.unrestricted[j] += pos;
                if y == j {
                    t.restricted[j] += pos;
                    t.positives[j] += 1;
                } else {
                    t.constraint[j] += neg_log(complement(p, j)).0;
                    t.negatives[j] += 1;
                }
            }
        }
        for j in 0..k {
            t.restricted[j] /= t.positives[j].max(1) as f64;
            t.constraint[j] /= t.negatives[j].max(1) as f64;
            t.unrestricted[j] /= n.max(1) as f64;
        }
        t
    }

    pub fn restricted_sum(&self) -> f64 {
        self.restricted.iter().sum()
    }

    pub fn constraint_sum(&self) -> f64 {
        self.constraint.iter().sum()
    }

    /// `Σ_k [L_k + λ_k (C̃_k − φ_k) + μ φ_k]`, with `L_k` restricted or unrestricted.
    pub fn lagrangian(&self, state: &LagrangianState, unrestricted: bool) -> f64 {
        let objective = if unrestricted { &self.unrestricted } else { &self.restricted };
        (0..self.restricted.len())
            .map(|j| objective[j] + state.lambdas[j] * (self.constraint[j] - state.phis[j]) + state.mu * state.phis[j])
            .sum()
    }
}

fn check_class(k: usize, width: usize) -> Result<()> {
    if k >= width {
        return Err(Error::invalid(format!("class {k} but the model has {width} outputs")));
    }
    Ok(())
}

/// Weighted sum `Σ_k [a_k L_k + b_k C̃_k]` with probability-space gradient, shared by every
/// one-sided loss.
fn weighted_osp(scores: &BatchScores<'_>, objective_w: &[f64], constraint_w: &[f64], unrestricted: bool) -> (f64, Vec<f64>) {
    let k = scores.width;
    let n = scores.rows();
    let terms = OspTerms::compute(scores);
    let mut value = 0.0;
    for j in 0..k {
        let l = if unrestricted { terms.unrestricted[j] } else { terms.restricted[j] };
        value += objective_w[j] * l + constraint_w[j] * terms.constraint[j];
    }
    let mut grad = vec![0.0; n * k];
    for i in 0..n {
        let p = scores.probs_row(i);
        let y = scores.labels[i];
        for j in 0..k {
            let g = &mut grad[i * k + j];
            if unrestricted {
                *g += objective_w[j] * neg_log(p[j]).1 / n as f64;
            } else if y == j {
                *g += objective_w[j] * neg_log(p[j]).1 / terms.positives[j] as f64;
            }
        }
        for j in 0..k {
            if y != j && constraint_w[j] != 0.0 {
                // C̃_j is taken as a function of the other outputs, q = Σ_{m≠j} p_m; on the
                // simplex this matches −log(1 − p_j) and pulls back to the same logit gradient.
                let d = constraint_w[j] * neg_log(complement(p, j)).1 / terms.negatives[j] as f64;
                for (m, g) in grad[i * k..(i + 1) * k].iter_mut().enumerate() {
                    if m != j {
                        *g += d;
                    }
                }
            }
        }
    }
    (value, logit_grad_from_prob_grad(scores, &grad))
}

/// `L̃_k^res` as a batch loss.
#[derive(Debug, Clone, Copy)]
pub struct RestrictedLoss {
    pub k: usize,
}

impl BatchLoss for RestrictedLoss {
    fn name(&self) -> &str {
        "restricted loss"
    }

    fn value_and_logit_grad(&self, scores: &BatchScores<'_>) -> Result<(f64, Vec<f64>)> {
        check_class(self.k, scores.width)?;
        let mut a = vec![0.0; scores.width];
        a[self.k] = 1.0;
        let (v, g) = weighted_osp(scores, &a, &vec![0.0; scores.width], false);
        Ok((ensure_finite(v, self.name())?, g))
    }
}

/// `C̃_k` as a batch loss.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintLoss {
    pub k: usize,
}

impl BatchLoss for ConstraintLoss {
    fn name(&self) -> &str {
        "constraint loss"
    }

    fn value_and_logit_grad(&self, scores: &BatchScores<'_>) -> Result<(f64, Vec<f64>)> {
        check_class(self.k, scores.width)?;
        let mut b = vec![0.0; scores.width];
        b[self.k] = 1.0;
        let (v, g) = weighted_osp(scores, &vec![0.0; scores.width], &b, false);
        Ok((ensure_finite(v, self.name())?, g))
    }
}

/// `M̃^res` at fixed multipliers, as a loss of the network parameters.
#[derive(Debug, Clone)]
pub struct OspLagrangian {
    pub state: LagrangianState,
    /// Use the unrestricted objective `L̃_k` instead of `L̃_k^res`.
    pub unrestricted: bool,
}

impl BatchLoss for OspLagrangian {
    fn name(&self) -> &str {
        "lagrangian"
    }

    fn value_and_logit_grad(&self, scores: &BatchScores<'_>) -> Result<(f64, Vec<f64>)> {
        if self.state.num_classes() != scores.width {
            return Err(Error::invalid(format!(
                "state has {} classes but the model has {} outputs",
                self.state.num_classes(),
                scores.width
            )));
        }
        let ones = vec![1.0; scores.width];
        let (v, g) = weighted_osp(scores, &ones, &self.state.lambdas, self.unrestricted);
        let slack: f64 = (0..scores.width)
            .map(|j| (self.state.mu - self.state.lambdas[j]) * self.state.phis[j])
            .sum();
        Ok((ensure_finite(v + slack, self.name())?, g))
    }
}

/// Deep Gamblers objective `−(1/n) Σ log(f_y + f_?/o)` for a model whose last output is `f_?`.
#[derive(Debug, Clone, Copy)]
pub struct DgLoss {
    pub payoff: f64,
}

impl DgLoss {
    /// Requires `1 ≤ o < K` for `K` class outputs.
    pub fn new(payoff: f64, num_classes: usize) -> Result<Self> {
        if !(payoff >= 1.0 && payoff < num_classes as f64) {
            return Err(Error::invalid(format!(
                "payoff {payoff} must lie in [1, {num_classes})"
            )));
        }
        Ok(Self { payoff })
    }
}

impl BatchLoss for DgLoss {
    fn name(&self) -> &str {
        "deep gamblers loss"
    }

    fn value_and_logit_grad(&self, scores: &BatchScores<'_>) -> Result<(f64, Vec<f64>)> {
        let w = scores.width;
        if w < 2 {
            return Err(Error::invalid("the gamblers loss needs an abstention output"));
        }
        let n = scores.rows();
        let mut value = 0.0;
        let mut grad = vec![0.0; n * w];
        for i in 0..n {
            let p = scores.probs_row(i);
            let y = scores.labels[i];
            if y + 1 >= w {
                return Err(Error::invalid(format!("label {y} collides with the abstention output")));
            }
            let (v, d) = neg_log(p[y] + p[w - 1] / self.payoff);
            value += v;
            grad[i * w + y] += d / n as f64;
            grad[i * w + w - 1] += d / (self.payoff * n as f64);
        }
        let value = ensure_finite(value / n as f64, self.name())?;
        Ok((value, logit_grad_from_prob_grad(scores, &grad)))
    }
}

/// `L̃_k^res` of `model` on `batch`.
pub fn restricted_loss(model: &SelectiveModel, batch: &LabeledDataset, k: usize) -> Result<f64> {
    loss_value(model, batch, &RestrictedLoss { k })
}

/// `C̃_k` of `model` on `batch`.
pub fn constraint_loss(model: &SelectiveModel, batch: &LabeledDataset, k: usize) -> Result<f64> {
    loss_value(model, batch, &ConstraintLoss { k })
}

/// `M̃^res(θ, w, φ, λ, μ)` on `batch`.
pub fn lagrangian(model: &SelectiveModel, batch: &LabeledDataset, state: &LagrangianState) -> Result<f64> {
    state.validate()?;
    loss_value(
        model,
        batch,
        &OspLagrangian {
            state: state.clone(),
            unrestricted: false,
        },
    )
}

/// Deep Gamblers loss of a `K + 1`-output model.
pub fn dg_loss(model: &SelectiveModel, batch: &LabeledDataset, payoff: f64) -> Result<f64> {
    let loss = DgLoss::new(payoff, model.num_outputs() - 1)?;
    loss_value(model, batch, &loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores<'a>(probs: &'a [f64], labels: &'a [usize], width: usize) -> BatchScores<'a> {
        BatchScores {
            logits: probs,
            probs,
            labels,
            width,
        }
    }

    #[test]
    fn restricted_closed_forms() {
        let t = OspTerms::compute(&scores(&[0.5, 0.5], &[0], 2));
        assert!((t.restricted[0] - 2f64.ln()).abs() < 1e-12);
        let t = OspTerms::compute(&scores(&[0.5, 0.5, 0.25, 0.75], &[0, 0], 2));
        assert!((t.restricted[0] - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        assert!((t.restricted[0] - 1.0397).abs() < 1e-4);
        let t = OspTerms::compute(&scores(&[1.0, 0.0], &[0], 2));
        assert!(t.restricted[0] < 1e-11);
    }

    #[test]
    fn constraint_closed_forms() {
        let t = OspTerms::compute(&scores(&[0.1, 0.9, 0.9, 0.1], &[1, 1], 2));
        let want = (-(0.9f64).ln() - (0.1f64).ln()) / 2.0;
        assert!((t.constraint[0] - want).abs() < 1e-12);
        assert!((t.constraint[0] - 1.2040).abs() < 1e-4);
        // Class 1 has no negatives in this batch.
        assert_eq!((t.constraint[1], t.negatives[1]), (0.0, 0));
    }

    #[test]
    fn lagrangian_hand_sum() {
        // Rows: (0.8, 0.2) label 0, (0.3, 0.7) label 1, (0.6, 0.4) label 1.
        let p = [0.8, 0.2, 0.3, 0.7, 0.6, 0.4];
        let t = OspTerms::compute(&scores(&p, &[0, 1, 1], 2));
        let state = LagrangianState {
            lambdas: vec![1.0, 2.0],
            phis: vec![0.1, 0.2],
            mu: 3.0,
        };
        let l0 = -(0.8f64).ln();
        let l1 = (-(0.7f64).ln() - (0.4f64).ln()) / 2.0;
        let c0 = (-(0.7f64).ln() - (0.4f64).ln()) / 2.0;
        let c1 = -(0.8f64).ln();
        let want = l0 + 1.0 * (c0 - 0.1) + 3.0 * 0.1 + l1 + 2.0 * (c1 - 0.2) + 3.0 * 0.2;
        assert!((t.lagrangian(&state, false) - want).abs() < 1e-12);
    }

    #[test]
    fn dg_closed_forms() {
        let l = DgLoss::new(2.0, 3).unwrap();
        let (v, _) = l.value_and_logit_grad(&scores(&[0.0, 0.0, 0.0, 1.0], &[1], 4)).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        // Without abstention mass the loss is cross-entropy.
        let (v, _) = l.value_and_logit_grad(&scores(&[0.2, 0.5, 0.3, 0.0], &[1], 4)).unwrap();
        assert!((v + (0.5f64).ln()).abs() < 1e-12);
        // Mixed batch, o = 1.5.
        let l = DgLoss::new(1.5, 2).unwrap();
        let p = [0.6, 0.1, 0.3, 0.2, 0.2, 0.6, 0.1, 0.7, 0.2];
        let (v, _) = l.value_and_logit_grad(&scores(&p, &[0, 1, 0], 3)).unwrap();
        let want = -((0.6f64 + 0.2).ln() + (0.2f64 + 0.4).ln() + (0.1f64 + 0.2 / 1.5).ln()) / 3.0;
        assert!((v - want).abs() < 1e-12);
        assert!(DgLoss::new(2.0, 2).is_err());
        assert!(DgLoss::new(0.5, 3).is_err());
    }
}
