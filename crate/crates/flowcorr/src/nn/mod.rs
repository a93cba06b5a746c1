//! Minimal neural engine: the exact layer set the correlator architectures
//! need, with manual backpropagation, Adam, finite-difference gradient
//! checking, and lossless checkpoint serialization. Double precision
//! throughout.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, FORMAT_VERSION};
pub use gradcheck::gradient_check;
pub use layers::{Conv2d, Dense, MaxPool};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{PairMatrix, PairMode, ScalingConfig};

/// Clamp bound for network outputs inside the cross-entropy loss.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape error at layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },
    #[error("input shape mismatch: expected {expected:?}, got {got:?}")]
    InputShape { expected: Shape, got: Shape },
    #[error("network must end with a single-unit sigmoid output")]
    BadOutputHead,
    #[error("gradient shape mismatch at layer {layer}")]
    GradShape { layer: usize },
}

/// Tensor extents: a (channels, height, width) volume or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Chw { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Chw { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dense row-major value array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Self {
        assert_eq!(shape.len(), data.len(), "shape/data length mismatch");
        Self { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            data: vec![0.0; shape.len()],
            shape,
        }
    }

    /// Views a pair matrix as a 1-channel input volume.
    pub fn from_pair(pair: &PairMatrix) -> Self {
        Self {
            shape: Shape::Chw {
                c: 1,
                h: pair.rows,
                w: pair.cols,
            },
            data: pair.data.clone(),
        }
    }
}

/// Weightless layer description: what the layer is, not what it has learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        kernels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    },
    MaxPool {
        window: (usize, usize),
        stride: (usize, usize),
    },
    Relu,
    Sigmoid,
    Flatten,
    Dense {
        units: usize,
    },
}

impl LayerSpec {
    /// Output shape given an input shape, or a message describing why the
    /// layer cannot consume it.
    pub fn out_shape(&self, input: Shape) -> Result<Shape, String> {
        match *self {
            LayerSpec::Conv2d { kernels, kernel, stride } => match input {
                Shape::Chw { c: _, h, w } => {
                    let (kh, kw) = kernel;
                    if kh == 0 || kw == 0 || stride.0 == 0 || stride.1 == 0 {
                        return Err("kernel and stride must be positive".into());
                    }
                    if kh > h || kw > w {
                        return Err(format!(
                            "kernel {kh}x{kw} larger than input {h}x{w}"
                        ));
                    }
                    Ok(Shape::Chw {
                        c: kernels,
                        h: (h - kh) / stride.0 + 1,
                        w: (w - kw) / stride.1 + 1,
                    })
                }
                Shape::Flat(_) => Err("conv2d needs a (c,h,w) input".into()),
            },
            LayerSpec::MaxPool { window, stride } => match input {
                Shape::Chw { c, h, w } => {
                    let (ph, pw) = window;
                    if ph == 0 || pw == 0 || stride.0 == 0 || stride.1 == 0 {
                        return Err("window and stride must be positive".into());
                    }
                    if ph > h || pw > w {
                        return Err(format!(
                            "pool window {ph}x{pw} larger than input {h}x{w}"
                        ));
                    }
                    Ok(Shape::Chw {
                        c,
                        h: (h - ph) / stride.0 + 1,
                        w: (w - pw) / stride.1 + 1,
                    })
                }
                Shape::Flat(_) => Err("maxpool needs a (c,h,w) input".into()),
            },
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input),
            LayerSpec::Flatten => Ok(Shape::Flat(input.len())),
            LayerSpec::Dense { units } => match input {
                Shape::Flat(n) => {
                    if units == 0 {
                        return Err("dense layer needs at least one unit".into());
                    }
                    if n == 0 {
                        return Err("dense layer input is empty".into());
                    }
                    Ok(Shape::Flat(units))
                }
                Shape::Chw { .. } => Err("dense needs a flat input (add flatten)".into()),
            },
        }
    }
}

/// Computes the shape after each layer without allocating any weights.
pub fn plan_shapes(input: Shape, specs: &[LayerSpec]) -> Result<Vec<Shape>, NnError> {
    let mut shapes = Vec::with_capacity(specs.len());
    let mut cur = input;
    for (idx, spec) in specs.iter().enumerate() {
        cur = spec
            .out_shape(cur)
            .map_err(|msg| NnError::Shape { layer: idx, msg })?;
        shapes.push(cur);
    }
    Ok(shapes)
}

/// A layer with its parameters (if any).
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool(MaxPool),
    Relu,
    Sigmoid,
    Flatten,
    Dense(Dense),
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                kernels: c.kernels,
                kernel: c.kernel,
                stride: c.stride,
            },
            Layer::MaxPool(p) => LayerSpec::MaxPool {
                window: p.window,
                stride: p.stride,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense { units: d.outputs },
        }
    }

    /// Weight and bias slices for parameterized layers.
    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv2d(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    fn forward(&self, input: &Tensor, cache: Option<&mut Vec<u32>>) -> Result<Tensor, String> {
        match self {
            Layer::Conv2d(c) => c.forward(input),
            Layer::MaxPool(p) => p.forward(input, cache),
            Layer::Relu => Ok(Tensor {
                shape: input.shape,
                data: input.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            }),
            Layer::Sigmoid => Ok(Tensor {
                shape: input.shape,
                data: input.data.iter().map(|&v| sigmoid(v)).collect(),
            }),
            Layer::Flatten => Ok(Tensor {
                shape: Shape::Flat(input.shape.len()),
                data: input.data.clone(),
            }),
            Layer::Dense(d) => d.forward(input),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-sample cross-entropy loss of a predicted probability against a
/// binary label, with the probability clamped to [eps, 1-eps].
pub fn cross_entropy_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Gradient arrays for one layer, shaped like its weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients for every layer of one network, aligned by layer index.
/// Weightless layers hold empty arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l.params() {
                Some((w, b)) => LayerGrads {
                    weights: vec![0.0; w.len()],
                    bias: vec![0.0; b.len()],
                },
                None => LayerGrads {
                    weights: Vec::new(),
                    bias: Vec::new(),
                },
            })
            .collect();
        Self { layers }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v *= s;
            }
        }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// A layered feed-forward model plus the input-side configuration that must
/// travel with the weights for scoring to match training.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
    pub scaling: ScalingConfig,
    pub pair_mode: PairMode,
}

impl Network {
    /// Builds a network from layer specs with Glorot-uniform weights
    /// (+-sqrt(6/(fan_in+fan_out))) and zero biases.
    pub fn build(
        input_shape: Shape,
        specs: &[LayerSpec],
        scaling: ScalingConfig,
        pair_mode: PairMode,
        rng: &mut impl Rng,
    ) -> Result<Self, NnError> {
        let shapes = plan_shapes(input_shape, specs)?;
        if shapes.last() != Some(&Shape::Flat(1)) || specs.last() != Some(&LayerSpec::Sigmoid) {
            return Err(NnError::BadOutputHead);
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut cur = input_shape;
        for (spec, &out) in specs.iter().zip(&shapes) {
            let layer = match *spec {
                LayerSpec::Conv2d { kernels, kernel, stride } => {
                    let in_channels = match cur {
                        Shape::Chw { c, .. } => c,
                        Shape::Flat(_) => unreachable!("checked by plan_shapes"),
                    };
                    Layer::Conv2d(Conv2d::glorot(in_channels, kernels, kernel, stride, rng))
                }
                LayerSpec::MaxPool { window, stride } => Layer::MaxPool(MaxPool { window, stride }),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Sigmoid => Layer::Sigmoid,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units } => {
                    let inputs = cur.len();
                    Layer::Dense(Dense::glorot(inputs, units, rng))
                }
            };
            layers.push(layer);
            cur = out;
        }
        Ok(Self {
            input_shape,
            layers,
            scaling,
            pair_mode,
        })
    }

    pub fn flow_len(&self) -> usize {
        match self.input_shape {
            Shape::Chw { w, .. } => w,
            Shape::Flat(n) => n,
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    /// The shape after each layer.
    pub fn shape_trace(&self) -> Result<Vec<Shape>, NnError> {
        plan_shapes(self.input_shape, &self.specs())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        if input.shape != self.input_shape {
            return Err(NnError::InputShape {
                expected: self.input_shape,
                got: input.shape,
            });
        }
        Ok(())
    }

    /// Full forward pass to the scalar output probability.
    pub fn forward(&self, input: &Tensor) -> Result<f64, NnError> {
        self.check_input(input)?;
        let mut cur = input.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            cur = layer
                .forward(&cur, None)
                .map_err(|msg| NnError::Shape { layer: idx, msg })?;
        }
        if cur.data.len() != 1 {
            return Err(NnError::BadOutputHead);
        }
        Ok(cur.data[0])
    }

    /// Forward pass keeping every activation plus max-pool argmax caches.
    fn forward_trace(&self, input: &Tensor) -> Result<Trace, NnError> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        let mut pool_argmax: Vec<Vec<u32>> = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut cache = Vec::new();
            let needs_cache = matches!(layer, Layer::MaxPool(_));
            let out = layer
                .forward(acts.last().unwrap(), needs_cache.then_some(&mut cache))
                .map_err(|msg| NnError::Shape { layer: idx, msg })?;
            if needs_cache {
                pool_argmax.push(cache);
            }
            acts.push(out);
        }
        Ok(Trace { acts, pool_argmax })
    }
}

struct Trace {
    acts: Vec<Tensor>,
    pool_argmax: Vec<Vec<u32>>,
}

/// Result of one backward pass: the sample loss, the predicted probability,
/// and exact analytic gradients for every parameter.
pub struct BackwardResult {
    pub loss: f64,
    pub p: f64,
    pub grads: Gradients,
}

/// Forward pass plus manual backpropagation of the cross-entropy loss.
///
/// The network must end in a single-unit sigmoid; backpropagation starts
/// from the combined sigmoid/cross-entropy gradient p - y at the output
/// pre-activation.
pub fn backward(net: &Network, input: &Tensor, y: f64) -> Result<BackwardResult, NnError> {
    let mut grads = Gradients::zeros_like(net);
    let (loss, p) = accumulate_backward(net, input, y, &mut grads)?;
    Ok(BackwardResult { loss, p, grads })
}

/// Like [`backward`] but adds the sample gradients into an existing
/// accumulator, so batch loops reuse one buffer.
pub fn accumulate_backward(
    net: &Network,
    input: &Tensor,
    y: f64,
    grads: &mut Gradients,
) -> Result<(f64, f64), NnError> {
    let trace = net.forward_trace(input)?;
    let n_layers = net.layers.len();
    let out = trace.acts.last().expect("trace has activations");
    if out.data.len() != 1 || !matches!(net.layers.last(), Some(Layer::Sigmoid)) {
        return Err(NnError::BadOutputHead);
    }
    let p = out.data[0];
    let loss = cross_entropy_loss(p, y);

    // d(loss)/d(pre-sigmoid) for the cross-entropy head.
    let mut delta = vec![p - y];
    let mut pool_idx = trace.pool_argmax.len();

    for idx in (0..n_layers - 1).rev() {
        let layer = &net.layers[idx];
        let input_act = &trace.acts[idx];
        delta = match layer {
            Layer::Conv2d(c) => c.backward(input_act, &delta, &mut grads.layers[idx]),
            Layer::MaxPool(p) => {
                pool_idx -= 1;
                p.backward(input_act.shape, &delta, &trace.pool_argmax[pool_idx])
            }
            Layer::Relu => input_act
                .data
                .iter()
                .zip(&delta)
                .map(|(&x, &d)| if x > 0.0 { d } else { 0.0 })
                .collect(),
            Layer::Sigmoid => {
                // Mid-network sigmoid (not used by the presets, but kept
                // correct): dy * s * (1 - s) with s the cached output.
                trace.acts[idx + 1]
                    .data
                    .iter()
                    .zip(&delta)
                    .map(|(&s, &d)| d * s * (1.0 - s))
                    .collect()
            }
            Layer::Flatten => delta,
            Layer::Dense(d) => d.backward(input_act, &delta, &mut grads.layers[idx]),
        };
    }
    Ok((loss, p))
}

/// Convenience wrapper matching the scoring contract: forward to p.
pub fn network_forward(net: &Network, input: &Tensor) -> Result<f64, NnError> {
    net.forward(input)
}
