use super::{Mlp, MlpParams};
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first: MlpParams,
    pub second: MlpParams,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(like: &MlpParams, learning_rate: f64) -> Self {
        Self {
            first: like.zeros_like(),
            second: like.zeros_like(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub fn adam_step(mlp: &mut Mlp, grads: &MlpParams, state: &mut AdamState) -> Result<()> {
    if !mlp.params().same_shape(grads) || !state.first.same_shape(grads) || !state.second.same_shape(grads) {
        return Err(Error::Shape("gradient or optimizer state does not match the network".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.learning_rate, state.epsilon);

    let params = mlp.params_mut();
    let blocks = params
        .blocks_mut()
        .zip(grads.blocks())
        .zip(state.first.blocks_mut())
        .zip(state.second.blocks_mut());
    for (((p, g), m), v) in blocks {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
