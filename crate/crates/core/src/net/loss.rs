//! Scalar batch losses over head outputs and the shared numeric guards.

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `−log(clamp(p))` and its derivative in `p` (zero where the clamp is active).
#[inline]
pub fn neg_log(p: f64) -> (f64, f64) {
    if p < PROB_FLOOR {
        (-PROB_FLOOR.ln(), 0.0)
    } else if p > 1.0 - PROB_FLOOR {
        (-(1.0 - PROB_FLOOR).ln(), 0.0)
    } else {
        (-p.ln(), -1.0 / p)
    }
}

/// `1 − p_k` summed from the other outputs, which keeps full relative precision when
/// `p_k` is close to one.
#[inline]
pub fn complement(p: &[f64], k: usize) -> f64 {
    p.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, v)| v).sum()
}

/// Head outputs of a batch, flattened row-major as `rows × width`.
#[derive(Debug, Clone, Copy)]
pub struct BatchScores<'a> {
    pub logits: &'a [f64],
    pub probs: &'a [f64],
    pub labels: &'a [usize],
    pub width: usize,
}

impl<'a> BatchScores<'a> {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn probs_row(&self, i: usize) -> &'a [f64] {
        &self.probs[i * self.width..(i + 1) * self.width]
    }

    pub fn logits_row(&self, i: usize) -> &'a [f64] {
        &self.logits[i * self.width..(i + 1) * self.width]
    }
}

/// A differentiable scalar loss of the head outputs.
pub trait BatchLoss {
    fn name(&self) -> &str;

    /// Loss value and its gradient with respect to every head logit (`rows × width`).
    fn value_and_logit_grad(&self, scores: &BatchScores<'_>) -> Result<(f64, Vec<f64>)>;
}

/// Pulls a gradient in probability space back through softmax:
/// `∂L/∂z_j = p_j (g_j − Σ_i p_i g_i)`.
pub fn softmax_backward(p: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, pj), gj) in out.iter_mut().zip(p).zip(g) {
        *o = pj * (gj - dot);
    }
}

/// Turns per-row probability gradients into logit gradients.
pub fn logit_grad_from_prob_grad(scores: &BatchScores<'_>, prob_grad: &[f64]) -> Vec<f64> {
    let w = scores.width;
    let mut out = vec![0.0; prob_grad.len()];
    for i in 0..scores.rows() {
        softmax_backward(
            scores.probs_row(i),
            &prob_grad[i * w..(i + 1) * w],
            &mut out[i * w..(i + 1) * w],
        );
    }
    out
}

pub(crate) fn ensure_finite(value: f64, term: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { term: term.to_string() })
    }
}

/// Multiclass cross-entropy `(1/n) Σ −log f_{y_i}(x_i)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl BatchLoss for CrossEntropy {
    fn name(&self) -> &str {
        "cross-entropy"
    }

    fn value_and_logit_grad(&self, scores: &BatchScores<'_>) -> Result<(f64, Vec<f64>)> {
        let n = scores.rows();
        if n == 0 {
            return Err(Error::invalid("cross-entropy of an empty batch"));
        }
        let w = scores.width;
        let mut total = 0.0;
        let mut grad = vec![0.0; n * w];
        for (i, &y) in scores.labels.iter().enumerate() {
            let (v, d) = neg_log(scores.probs_row(i)[y]);
            total += v;
            grad[i * w + y] = d / n as f64;
        }
        let value = ensure_finite(total / n as f64, self.name())?;
        Ok((value, logit_grad_from_prob_grad(scores, &grad)))
    }
}
