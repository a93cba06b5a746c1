//! The parameterized layers and their forward/backward kernels.
//!
//! Layouts: conv weights are [kernel][in_channel][ky][kx] row-major, dense
//! weights [output][input] row-major, activations channel-major (c, h, w).

use rand::Rng;

use super::{LayerGrads, Shape, Tensor};

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n4 = a.len() / 4 * 4;
    let (a4, ar) = a.split_at(n4);
    let (b4, br) = b.split_at(n4);
    let mut acc = [0.0f64; 4];
    for (ca, cb) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ar.iter().zip(br) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// 2-D convolution over a (c, h, w) volume, valid padding only.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub kernels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn glorot(
        in_channels: usize,
        kernels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let (kh, kw) = kernel;
        let fan_in = in_channels * kh * kw;
        let fan_out = kernels * kh * kw;
        let bound = glorot_bound(fan_in, fan_out);
        let weights = (0..kernels * fan_in)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            in_channels,
            kernels,
            kernel,
            stride,
            weights,
            bias: vec![0.0; kernels],
        }
    }

    fn dims(&self, input: &Tensor) -> Result<(usize, usize, usize, usize, usize), String> {
        let (c, h, w) = match input.shape {
            Shape::Chw { c, h, w } => (c, h, w),
            Shape::Flat(_) => return Err("conv2d needs a (c,h,w) input".into()),
        };
        if c != self.in_channels {
            return Err(format!(
                "expected {} input channels, got {c}",
                self.in_channels
            ));
        }
        let (kh, kw) = self.kernel;
        if kh > h || kw > w {
            return Err(format!("kernel {kh}x{kw} larger than input {h}x{w}"));
        }
        let oh = (h - kh) / self.stride.0 + 1;
        let ow = (w - kw) / self.stride.1 + 1;
        Ok((h, w, oh, ow, c))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, String> {
        let (h, w, oh, ow, c_in) = self.dims(input)?;
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let ksize = c_in * kh * kw;
        let mut out = vec![0.0; self.kernels * oh * ow];
        for k in 0..self.kernels {
            let wk = &self.weights[k * ksize..(k + 1) * ksize];
            let b = self.bias[k];
            for oy in 0..oh {
                let iy0 = oy * sh;
                let out_row = &mut out[(k * oh + oy) * ow..(k * oh + oy + 1) * ow];
                for (ox, o) in out_row.iter_mut().enumerate() {
                    let ix0 = ox * sw;
                    let mut acc = b;
                    for c in 0..c_in {
                        for ky in 0..kh {
                            let base = (c * h + iy0 + ky) * w + ix0;
                            acc += dot(
                                &input.data[base..base + kw],
                                &wk[(c * kh + ky) * kw..(c * kh + ky + 1) * kw],
                            );
                        }
                    }
                    *o = acc;
                }
            }
        }
        Ok(Tensor {
            shape: Shape::Chw {
                c: self.kernels,
                h: oh,
                w: ow,
            },
            data: out,
        })
    }

    /// Backward pass: accumulates weight/bias gradients into `grads` and
    /// returns the gradient with respect to the layer input.
    pub fn backward(&self, input: &Tensor, dout: &[f64], grads: &mut LayerGrads) -> Vec<f64> {
        let (h, w, oh, ow, c_in) = self.dims(input).expect("forward succeeded");
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let ksize = c_in * kh * kw;
        let mut din = vec![0.0; input.data.len()];
        for k in 0..self.kernels {
            let wk = &self.weights[k * ksize..(k + 1) * ksize];
            let gk = &mut grads.weights[k * ksize..(k + 1) * ksize];
            let mut db = 0.0;
            for oy in 0..oh {
                let iy0 = oy * sh;
                let dout_row = &dout[(k * oh + oy) * ow..(k * oh + oy + 1) * ow];
                for (ox, &d) in dout_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    db += d;
                    let ix0 = ox * sw;
                    for c in 0..c_in {
                        for ky in 0..kh {
                            let base = (c * h + iy0 + ky) * w + ix0;
                            let woff = (c * kh + ky) * kw;
                            axpy(d, &input.data[base..base + kw], &mut gk[woff..woff + kw]);
                            axpy(d, &wk[woff..woff + kw], &mut din[base..base + kw]);
                        }
                    }
                }
            }
            grads.bias[k] += db;
        }
        din
    }
}

/// Max pooling over each channel independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool {
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl MaxPool {
    /// Forward pass; when `argmax` is given it receives the flat input index
    /// of each output cell's maximum (first occurrence wins on ties).
    pub fn forward(&self, input: &Tensor, argmax: Option<&mut Vec<u32>>) -> Result<Tensor, String> {
        let (c, h, w) = match input.shape {
            Shape::Chw { c, h, w } => (c, h, w),
            Shape::Flat(_) => return Err("maxpool needs a (c,h,w) input".into()),
        };
        let (ph, pw) = self.window;
        if ph > h || pw > w {
            return Err(format!("pool window {ph}x{pw} larger than input {h}x{w}"));
        }
        let (sh, sw) = self.stride;
        let oh = (h - ph) / sh + 1;
        let ow = (w - pw) / sw + 1;
        let mut out = vec![0.0; c * oh * ow];
        let mut idxs = argmax;
        if let Some(v) = idxs.as_deref_mut() {
            v.clear();
            v.reserve(out.len());
        }
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ky in 0..ph {
                        let base = (ch * h + oy * sh + ky) * w + ox * sw;
                        for kx in 0..pw {
                            let v = input.data[base + kx];
                            if v > best {
                                best = v;
                                best_idx = base + kx;
                            }
                        }
                    }
                    out[(ch * oh + oy) * ow + ox] = best;
                    if let Some(v) = idxs.as_deref_mut() {
                        v.push(best_idx as u32);
                    }
                }
            }
        }
        Ok(Tensor {
            shape: Shape::Chw { c, h: oh, w: ow },
            data: out,
        })
    }

    /// Routes each output gradient back to the input cell that won the max.
    pub fn backward(&self, input_shape: Shape, dout: &[f64], argmax: &[u32]) -> Vec<f64> {
        let mut din = vec![0.0; input_shape.len()];
        for (&idx, &d) in argmax.iter().zip(dout) {
            din[idx as usize] += d;
        }
        din
    }
}

/// Fully connected affine layer y = W x + b.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = glorot_bound(inputs, outputs);
        let weights = (0..inputs * outputs)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, String> {
        let n = match input.shape {
            Shape::Flat(n) => n,
            Shape::Chw { .. } => return Err("dense needs a flat input (add flatten)".into()),
        };
        if n != self.inputs {
            return Err(format!("expected {} inputs, got {n}", self.inputs));
        }
        let x = &input.data;
        let data = (0..self.outputs)
            .map(|o| self.bias[o] + dot(&self.weights[o * n..(o + 1) * n], x))
            .collect();
        Ok(Tensor {
            shape: Shape::Flat(self.outputs),
            data,
        })
    }

    pub fn backward(&self, input: &Tensor, dout: &[f64], grads: &mut LayerGrads) -> Vec<f64> {
        let n = self.inputs;
        let x = &input.data;
        let mut din = vec![0.0; n];
        for (o, &d) in dout.iter().enumerate() {
            grads.bias[o] += d;
            if d == 0.0 {
                continue;
            }
            let row = o * n..(o + 1) * n;
            axpy(d, x, &mut grads.weights[row.clone()]);
            axpy(d, &self.weights[row], &mut din);
        }
        din
    }
}
