//! Versioned checkpoint documents.
//!
//! JSON with weights as decimal arrays; serde emits shortest
//! round-trip decimals, so doubles survive save/load bit-for-bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{plan_shapes, Conv2d, Dense, Layer, MaxPool, Network, Shape};
use crate::flowdata::{PairMode, ScalingConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format version mismatch: found {found}, expected {expected}")]
    Version { found: u64, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Parse(String),
    #[error("invalid checkpoint: {0}")]
    Invalid(String),
}

impl CheckpointError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CheckpointError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    preset: PairMode,
    flow_len: usize,
    scaling: ScalingConfig,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerDoc {
    Conv2d {
        in_channels: usize,
        kernels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    MaxPool {
        window: (usize, usize),
        stride: (usize, usize),
    },
    Relu,
    Sigmoid,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
}

/// Serializes a network to a versioned checkpoint file.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<(), CheckpointError> {
    let doc = CheckpointDoc {
        format_version: FORMAT_VERSION,
        preset: net.pair_mode,
        flow_len: net.flow_len(),
        scaling: net.scaling,
        layers: net.layers.iter().map(layer_doc).collect(),
    };
    let bytes = serde_json::to_vec(&doc).map_err(|e| CheckpointError::Parse(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| CheckpointError::io(path, e))
}

fn layer_doc(layer: &Layer) -> LayerDoc {
    match layer {
        Layer::Conv2d(c) => LayerDoc::Conv2d {
            in_channels: c.in_channels,
            kernels: c.kernels,
            kernel: c.kernel,
            stride: c.stride,
            weights: c.weights.clone(),
            bias: c.bias.clone(),
        },
        Layer::MaxPool(p) => LayerDoc::MaxPool {
            window: p.window,
            stride: p.stride,
        },
        Layer::Relu => LayerDoc::Relu,
        Layer::Sigmoid => LayerDoc::Sigmoid,
        Layer::Flatten => LayerDoc::Flatten,
        Layer::Dense(d) => LayerDoc::Dense {
            inputs: d.inputs,
            outputs: d.outputs,
            weights: d.weights.clone(),
            bias: d.bias.clone(),
        },
    }
}

/// Loads and validates a checkpoint, rejecting unknown format versions.
pub fn load_checkpoint(path: &Path) -> Result<Network, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|e| CheckpointError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Parse(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| CheckpointError::Parse("missing format_version".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(CheckpointError::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let doc: CheckpointDoc =
        serde_json::from_value(value).map_err(|e| CheckpointError::Parse(e.to_string()))?;

    let layers: Vec<Layer> = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(idx, l)| build_layer(idx, l))
        .collect::<Result<_, _>>()?;
    let input_shape = Shape::Chw {
        c: 1,
        h: doc.preset.rows(),
        w: doc.flow_len,
    };
    let net = Network {
        input_shape,
        layers,
        scaling: doc.scaling,
        pair_mode: doc.preset,
    };
    // Layer shapes must compose end to end for the declared input.
    plan_shapes(input_shape, &net.specs())
        .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    Ok(net)
}

fn build_layer(idx: usize, doc: LayerDoc) -> Result<Layer, CheckpointError> {
    let check = |name: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(CheckpointError::Invalid(format!(
                "layer {idx}: {name} has {got} values, expected {want}"
            )))
        }
    };
    Ok(match doc {
        LayerDoc::Conv2d {
            in_channels,
            kernels,
            kernel,
            stride,
            weights,
            bias,
        } => {
            check("weights", weights.len(), kernels * in_channels * kernel.0 * kernel.1)?;
            check("bias", bias.len(), kernels)?;
            Layer::Conv2d(Conv2d {
                in_channels,
                kernels,
                kernel,
                stride,
                weights,
                bias,
            })
        }
        LayerDoc::MaxPool { window, stride } => Layer::MaxPool(MaxPool { window, stride }),
        LayerDoc::Relu => Layer::Relu,
        LayerDoc::Sigmoid => Layer::Sigmoid,
        LayerDoc::Flatten => Layer::Flatten,
        LayerDoc::Dense {
            inputs,
            outputs,
            weights,
            bias,
        } => {
            check("weights", weights.len(), inputs * outputs)?;
            check("bias", bias.len(), outputs)?;
            Layer::Dense(Dense {
                inputs,
                outputs,
                weights,
                bias,
            })
        }
    })
}
