//! Adam optimizer with the standard bias correction.

use super::{Gradients, Network, NnError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, net: &Network) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update of every network parameter in place.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NnError> {
        if grads.layers.len() != net.layers.len() {
            return Err(NnError::GradShape { layer: 0 });
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (idx, layer) in net.layers.iter_mut().enumerate() {
            let Some((w, b)) = layer.params_mut() else {
                continue;
            };
            let g = &grads.layers[idx];
            if g.weights.len() != w.len() || g.bias.len() != b.len() {
                return Err(NnError::GradShape { layer: idx });
            }
            let mg = &mut self.m.layers[idx];
            let vg = &mut self.v.layers[idx];
            update(w, &g.weights, &mut mg.weights, &mut vg.weights, c, bc1, bc2);
            update(b, &g.bias, &mut mg.bias, &mut vg.bias, c, bc1, bc2);
        }
        Ok(())
    }
}

fn update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    c: AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
}
