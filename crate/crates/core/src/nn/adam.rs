use serde::{Deserialize, Serialize};

use super::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates, flattened in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(num_scalars: usize) -> Self {
        Self {
            m: vec![0.0; num_scalars],
            v: vec![0.0; num_scalars],
            t: 0,
        }
    }

    pub fn for_params<P: Parameters>(p: &P) -> Self {
        Self::new(p.num_scalars())
    }
}

/// One bias-corrected Adam update. Weight decay is the coupled L2 form.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let grads = grads.tensors();
    let mut off = 0;
    for (p, g) in params.tensors_mut().into_iter().zip(grads) {
        debug_assert_eq!(p.len(), g.len());
        for (i, (w, &gi)) in p.iter_mut().zip(g).enumerate() {
            let gi = gi + cfg.weight_decay * *w;
            let k = off + i;
            state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * gi;
            state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * gi * gi;
            let mhat = state.m[k] / bc1;
            let vhat = state.v[k] / bc2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        off += p.len();
    }
}
