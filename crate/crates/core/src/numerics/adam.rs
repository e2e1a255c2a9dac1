//! Adam with bias correction — the single optimizer used by every trainer in
//! the crate (flow matching, supervised demos, policy optimization).
//!
//! Update, with step count `t` starting at 1:
//!
//! ```text
//! m = b1 m + (1-b1) g        m_hat = m / (1 - b1^t)
//! v = b2 v + (1-b2) g^2      v_hat = v / (1 - b2^t)
//! p -= lr * m_hat / (sqrt(v_hat) + eps)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, CoreError, Result};
use crate::numerics::{MlpGrads, MlpParams};

/// Adam hyperparameters. `lr` is supplied per trainer; the moment decays and
/// epsilon use the standard values.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn for_params(p: &MlpParams) -> Self {
        Self::new(p.param_count())
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }
}

/// One Adam descent step on flat parameters (minimizes; callers that maximize
/// pass the negated gradient).
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(CoreError::ShapeMismatch {
            context: "adam_step",
            expected: state.m.len().to_string(),
            actual: format!("{} params / {} grads", params.len(), grads.len()),
        });
    }
    ensure_finite(grads, "adam_step")?;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam step applied to a whole network via its flat parameter view.
pub fn adam_step_mlp(
    p: &mut MlpParams,
    grads: &MlpGrads,
    state: &mut OptState,
    cfg: &AdamConfig,
) -> Result<()> {
    let mut flat = p.flatten();
    adam_step(&mut flat, &grads.flatten(), state, cfg)?;
    p.assign_flat(&flat)
}
