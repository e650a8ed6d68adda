//! Versioned JSON payload for models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{BackboneSpec, Dense, SelectiveModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerPayload {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelPayload {
    format_version: u32,
    spec: BackboneSpec,
    num_outputs: usize,
    backbone: Vec<LayerPayload>,
    head: LayerPayload,
}

impl From<&Dense> for LayerPayload {
    fn from(d: &Dense) -> Self {
        Self {
            inputs: d.inputs(),
            outputs: d.outputs(),
            weights: d.weights().to_vec(),
            bias: d.bias().to_vec(),
        }
    }
}

impl TryFrom<LayerPayload> for Dense {
    type Error = Error;

    fn try_from(p: LayerPayload) -> Result<Self> {
        Dense::from_parts(p.inputs, p.outputs, p.weights, p.bias)
    }
}

pub fn serialize(model: &SelectiveModel) -> Vec<u8> {
    let payload = ModelPayload {
        format_version: FORMAT_VERSION,
        spec: model.spec().clone(),
        num_outputs: model.num_outputs(),
        backbone: model.backbone_layers().iter().map(LayerPayload::from).collect(),
        head: model.head().into(),
    };
    serde_json::to_vec_pretty(&payload).expect("model payload always serialises")
}

pub fn deserialize(bytes: &[u8]) -> Result<SelectiveModel> {
    let payload: ModelPayload =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
    if payload.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format version {} is not the supported version {FORMAT_VERSION}",
            payload.format_version
        )));
    }
    payload.spec.validate().map_err(|e| Error::Shape(e.to_string()))?;
    if payload.head.outputs != payload.num_outputs {
        return Err(Error::Shape(format!(
            "declared {} outputs but the head has {}",
            payload.num_outputs, payload.head.outputs
        )));
    }
    let backbone = payload
        .backbone
        .into_iter()
        .map(Dense::try_from)
        .collect::<Result<Vec<_>>>()?;
    SelectiveModel::from_layers(payload.spec, backbone, payload.head.try_into()?)
}

/// [`deserialize`], additionally requiring `num_outputs` head outputs.
pub fn deserialize_expecting(bytes: &[u8], num_outputs: usize) -> Result<SelectiveModel> {
    let model = deserialize(bytes)?;
    if model.num_outputs() != num_outputs {
        return Err(Error::Shape(format!(
            "model has {} outputs, expected {num_outputs}",
            model.num_outputs()
        )));
    }
    Ok(model)
}
