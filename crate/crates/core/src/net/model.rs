use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Widths of the shared backbone `(input, hidden..., feature)`; the activation follows
/// every backbone layer. `[d, m]` with the identity activation is a linear backbone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl BackboneSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two relu hidden layers of width 64 feeding a 64-wide feature layer.
    pub fn desk_default(input_dim: usize) -> Self {
        Self {
            layer_widths: vec![input_dim, 64, 64],
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid("backbone needs at least input and output widths"));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("backbone widths must be positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn feature_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }
}

/// Dense affine map with weights stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Scaled uniform initialisation `U[-√(6/(in+out)), √(6/(in+out))]`, zero biases.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn from_parts(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "dense {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Shared backbone `ξ_θ` followed by one linear head per output, normalised by softmax:
/// `f(x) = softmax(⟨w_k, ξ_θ(x)⟩ + b_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveModel {
    pub(crate) spec: BackboneSpec,
    pub(crate) backbone: Vec<Dense>,
    pub(crate) head: Dense,
}

impl SelectiveModel {
    /// Randomly initialised model with `num_outputs` heads.
    pub fn new(spec: BackboneSpec, num_outputs: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if num_outputs == 0 {
            return Err(Error::invalid("a model needs at least one output"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = spec
            .layer_widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        let head = Dense::glorot(spec.feature_dim(), num_outputs, &mut rng);
        Ok(Self {
            spec,
            backbone,
            head,
        })
    }

    pub fn from_layers(spec: BackboneSpec, backbone: Vec<Dense>, head: Dense) -> Result<Self> {
        spec.validate()?;
        let widths = &spec.layer_widths;
        if backbone.len() != widths.len() - 1 {
            return Err(Error::Shape(format!(
                "spec has {} backbone layers, got {}",
                widths.len() - 1,
                backbone.len()
            )));
        }
        for (i, layer) in backbone.iter().enumerate() {
            if layer.inputs != widths[i] || layer.outputs != widths[i + 1] {
                return Err(Error::Shape(format!(
                    "backbone layer {i} is {}->{}, spec says {}->{}",
                    layer.inputs,
                    layer.outputs,
                    widths[i],
                    widths[i + 1]
                )));
            }
        }
        if head.inputs != spec.feature_dim() || head.outputs == 0 {
            return Err(Error::Shape(format!(
                "head is {}->{}, feature width is {}",
                head.inputs,
                head.outputs,
                spec.feature_dim()
            )));
        }
        Ok(Self {
            spec,
            backbone,
            head,
        })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim()
    }

    pub fn num_outputs(&self) -> usize {
        self.head.outputs
    }

    pub fn backbone_layers(&self) -> &[Dense] {
        &self.backbone
    }

    pub fn backbone_layers_mut(&mut self) -> &mut [Dense] {
        &mut self.backbone
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Dense {
        &mut self.head
    }

    pub fn param_count(&self) -> usize {
        self.backbone_param_count() + self.head.param_count()
    }

    pub fn backbone_param_count(&self) -> usize {
        self.backbone.iter().map(Dense::param_count).sum()
    }

    /// Every parameter in declared order: backbone layers (weights, then biases), then the head.
    pub fn parameters(&self) -> Vec<f64> {
        self.backbone
            .iter()
            .flat_map(Dense::params)
            .chain(self.head.params())
            .copied()
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let slots = self
            .backbone
            .iter_mut()
            .flat_map(Dense::params_mut)
            .chain(self.head.params_mut());
        for (slot, v) in slots.zip(values) {
            *slot = *v;
        }
        Ok(())
    }

    pub(crate) fn add_to_backbone(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.backbone_param_count());
        for (p, d) in self.backbone.iter_mut().flat_map(Dense::params_mut).zip(delta) {
            *p += d;
        }
    }

    pub(crate) fn add_to_head(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.head.param_count());
        for (p, d) in self.head.params_mut().zip(delta) {
            *p += d;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Backbone output `ξ_θ(x)`.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for layer in &self.backbone {
            layer.apply_into(&a, &mut z);
            a.clear();
            a.extend(z.iter().map(|&v| self.spec.activation.apply(v)));
        }
        Ok(a)
    }

    /// Head logits `⟨w_k, ξ_θ(x)⟩ + b_k`.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let features = self.features(x)?;
        let mut z = Vec::with_capacity(self.num_outputs());
        self.head.apply_into(&features, &mut z);
        Ok(z)
    }

    /// Softmax scores `f_1..f_K`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }
}

/// Softmax with max-logit subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
