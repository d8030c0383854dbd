use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkParams, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: params.zero_gradients(),
            v: params.zero_gradients(),
        }
    }
}

fn same_shape(a: &Gradients, b: &Gradients) -> bool {
    a.weights.len() == b.weights.len()
        && a.biases.len() == b.biases.len()
        && a.weights.iter().zip(&b.weights).all(|(x, y)| x.len() == y.len())
        && a.biases.iter().zip(&b.biases).all(|(x, y)| x.len() == y.len())
}

/// Moments of parameters whose gradient is stuck at zero (dead ReLU units)
/// decay geometrically into subnormal range, where arithmetic is several times
/// slower. Below the smallest normal they are worth nothing anyway.
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// One bias-corrected Adam update. Non-finite gradients leave both the
/// parameters and the moments untouched.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, state: &mut AdamState) -> Result<(), NnError> {
    if !same_shape(grads, &state.m) || state.m.weights.len() != params.n_layers() {
        return Err(NnError::Shape(
            "gradients, moments and parameters differ in shape".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(NnError::NonFinite("gradients"));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let blocks = params
        .weights
        .iter_mut()
        .chain(params.biases.iter_mut())
        .zip(grads.weights.iter().chain(&grads.biases))
        .zip(state.m.weights.iter_mut().chain(state.m.biases.iter_mut()))
        .zip(state.v.weights.iter_mut().chain(state.v.biases.iter_mut()));
    for (((p, g), m), v) in blocks {
        for i in 0..p.len() {
            m[i] = flush(beta1 * m[i] + (1.0 - beta1) * g[i]);
            v[i] = flush(beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]);
            p[i] -= learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + epsilon);
        }
    }
    Ok(())
}
