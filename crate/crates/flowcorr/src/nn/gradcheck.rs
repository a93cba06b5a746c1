//! Finite-difference validation of the analytic gradients.

use super::{backward, cross_entropy_loss, Network, NnError, Tensor};

/// Compares analytic gradients against central differences
/// (L(w+h) - L(w-h)) / 2h for every parameter and returns the maximum
/// relative error, with the denominator floored at max(|analytic|,
/// |numeric|, 1e-8) so parameters with zero gradient are measured
/// absolutely.
///
/// Cost is two forward passes per parameter; intended for small networks.
pub fn gradient_check(net: &Network, input: &Tensor, y: f64, h: f64) -> Result<f64, NnError> {
    let analytic = backward(net, input, y)?.grads;
    let mut probe = net.clone();
    let mut max_rel = 0.0f64;

    for layer_idx in 0..probe.layers.len() {
        let n_params = match probe.layers[layer_idx].params() {
            Some((w, b)) => w.len() + b.len(),
            None => continue,
        };
        for p_idx in 0..n_params {
            let original = {
                let (w, b) = probe.layers[layer_idx].params_mut().expect("has params");
                let slot = param_slot(w, b, p_idx);
                let orig = *slot;
                *slot = orig + h;
                orig
            };
            let loss_plus = cross_entropy_loss(probe.forward(input)?, y);
            {
                let (w, b) = probe.layers[layer_idx].params_mut().expect("has params");
                *param_slot(w, b, p_idx) = original - h;
            }
            let loss_minus = cross_entropy_loss(probe.forward(input)?, y);
            {
                let (w, b) = probe.layers[layer_idx].params_mut().expect("has params");
                *param_slot(w, b, p_idx) = original;
            }

            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let g = &analytic.layers[layer_idx];
            let a = if p_idx < g.weights.len() {
                g.weights[p_idx]
            } else {
                g.bias[p_idx - g.weights.len()]
            };
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    Ok(max_rel)
}

fn param_slot<'a>(w: &'a mut [f64], b: &'a mut [f64], idx: usize) -> &'a mut f64 {
    if idx < w.len() {
        &mut w[idx]
    } else {
        &mut b[idx - w.len()]
    }
}
