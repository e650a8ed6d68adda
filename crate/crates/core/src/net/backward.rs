//! Batched forward pass with cached activations and hand-written reverse mode.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

use super::loss::{ensure_finite, BatchLoss, BatchScores};
use super::model::{softmax, Dense, SelectiveModel};

/// Activations of one batch, each stored row-major as `rows × width`.
#[derive(Debug, Clone)]
pub struct Trace {
    rows: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Trace {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn scores<'a>(&'a self, labels: &'a [usize], width: usize) -> BatchScores<'a> {
        BatchScores {
            logits: &self.logits,
            probs: &self.probs,
            labels,
            width,
        }
    }
}

fn dense_forward(layer: &Dense, input: &[f64], rows: usize) -> Vec<f64> {
    let (ni, no) = (layer.inputs(), layer.outputs());
    let w = layer.weights();
    let b = layer.bias();
    let mut out = vec![0.0; rows * no];
    for r in 0..rows {
        let x = &input[r * ni..(r + 1) * ni];
        let z = &mut out[r * no..(r + 1) * no];
        for o in 0..no {
            let row = &w[o * ni..(o + 1) * ni];
            z[o] = b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        }
    }
    out
}

/// Accumulates weight/bias gradients of `layer` into `grad` and, when asked, returns the
/// gradient with respect to the layer input.
fn dense_backward(
    layer: &Dense,
    input: &[f64],
    dout: &[f64],
    rows: usize,
    grad: &mut Dense,
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let (ni, no) = (layer.inputs(), layer.outputs());
    let w = layer.weights();
    let mut din = want_input_grad.then(|| vec![0.0; rows * ni]);
    for r in 0..rows {
        let x = &input[r * ni..(r + 1) * ni];
        let dz = &dout[r * no..(r + 1) * no];
        {
            let gw = grad.weights_mut();
            for o in 0..no {
                let d = dz[o];
                if d == 0.0 {
                    continue;
                }
                for (g, v) in gw[o * ni..(o + 1) * ni].iter_mut().zip(x) {
                    *g += d * v;
                }
            }
        }
        for (g, d) in grad.bias_mut().iter_mut().zip(dz) {
            *g += d;
        }
        if let Some(din) = din.as_mut() {
            let dx = &mut din[r * ni..(r + 1) * ni];
            for o in 0..no {
                let d = dz[o];
                if d == 0.0 {
                    continue;
                }
                for (g, wv) in dx.iter_mut().zip(&w[o * ni..(o + 1) * ni]) {
                    *g += d * wv;
                }
            }
        }
    }
    din
}

impl SelectiveModel {
    /// Forward pass over `rows` inputs, keeping what the backward pass needs.
    pub fn forward_trace<'a, I>(&self, inputs: I) -> Result<Trace>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let d = self.input_dim();
        let mut input = Vec::new();
        let mut rows = 0;
        for x in inputs {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            input.extend_from_slice(x);
            rows += 1;
        }
        let act = self.spec.activation;
        let mut pre = Vec::with_capacity(self.backbone.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.backbone.len());
        for layer in &self.backbone {
            let z = dense_forward(layer, post.last().unwrap_or(&input), rows);
            post.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        let features = post.last().expect("backbone has at least one layer");
        let logits = dense_forward(&self.head, features, rows);
        let k = self.num_outputs();
        let mut probs = Vec::with_capacity(logits.len());
        for r in 0..rows {
            probs.extend(softmax(&logits[r * k..(r + 1) * k]));
        }
        Ok(Trace {
            rows,
            input,
            pre,
            post,
            logits,
            probs,
        })
    }

    /// Gradients of a scalar loss given its gradient `dlogits` (`rows × K`) at the head logits.
    pub fn backward_trace(&self, trace: &Trace, dlogits: &[f64]) -> GradientBundle {
        let mut grads = GradientBundle::zeros_like(self);
        let rows = trace.rows;
        let features = trace.post.last().expect("backbone has at least one layer");
        let mut dpost = dense_backward(&self.head, features, dlogits, rows, &mut grads.head, true)
            .expect("input gradient requested");
        let act = self.spec.activation;
        for l in (0..self.backbone.len()).rev() {
            let dpre: Vec<f64> = dpost
                .iter()
                .zip(&trace.pre[l])
                .zip(&trace.post[l])
                .map(|((g, &z), &a)| g * act.derivative(z, a))
                .collect();
            let input = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            match dense_backward(&self.backbone[l], input, &dpre, rows, &mut grads.backbone[l], l > 0) {
                Some(d) => dpost = d,
                None => break,
            }
        }
        grads
    }
}

/// Partial derivatives shaped exactly like a model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub backbone: Vec<Dense>,
    pub head: Dense,
}

impl GradientBundle {
    pub fn zeros_like(model: &SelectiveModel) -> Self {
        Self {
            backbone: model
                .backbone_layers()
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
            head: Dense::zeros(model.head().inputs(), model.head().outputs()),
        }
    }

    /// Backbone partials in the model's declared parameter order.
    pub fn backbone_flat(&self) -> Vec<f64> {
        self.backbone.iter().flat_map(Dense::params).copied().collect()
    }

    pub fn head_flat(&self) -> Vec<f64> {
        self.head.params().copied().collect()
    }

    /// All partials in the same order as [`SelectiveModel::parameters`].
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.backbone_flat();
        v.extend(self.head.params());
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Loss on a batch and its exact gradient with respect to every parameter.
pub fn backward(model: &SelectiveModel, batch: &LabeledDataset, loss: &dyn BatchLoss) -> Result<(f64, GradientBundle)> {
    let labels: Vec<usize> = batch.labels().collect();
    backward_rows(model, batch.iter().map(|e| e.features.as_slice()), &labels, loss)
}

/// [`backward`] over borrowed rows.
pub fn backward_rows<'a, I>(
    model: &SelectiveModel,
    inputs: I,
    labels: &[usize],
    loss: &dyn BatchLoss,
) -> Result<(f64, GradientBundle)>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let trace = model.forward_trace(inputs)?;
    if trace.rows() == 0 {
        return Err(Error::invalid("backward needs a nonempty batch"));
    }
    let (value, dlogits) = loss.value_and_logit_grad(&trace.scores(labels, model.num_outputs()))?;
    let value = ensure_finite(value, loss.name())?;
    Ok((value, model.backward_trace(&trace, &dlogits)))
}

/// Loss value only.
pub fn loss_value(model: &SelectiveModel, batch: &LabeledDataset, loss: &dyn BatchLoss) -> Result<f64> {
    let labels: Vec<usize> = batch.labels().collect();
    let trace = model.forward_trace(batch.iter().map(|e| e.features.as_slice()))?;
    let (value, _) = loss.value_and_logit_grad(&trace.scores(&labels, model.num_outputs()))?;
    ensure_finite(value, loss.name())
}
