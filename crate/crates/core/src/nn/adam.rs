//! Adam with bias correction, applied tensor-by-tensor over the fixed
//! parameter walk order.

use super::LstmParams;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// One bias-corrected Adam update on a flat tensor. `step` is the 1-based
/// step count after this update.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &AdamConfig,
) {
    let b1 = cfg.beta1;
    let b2 = cfg.beta2;
    let bc1 = 1.0 - b1.powi(step as i32);
    let bc2 = 1.0 - b2.powi(step as i32);
    for i in 0..params.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grads[i] * grads[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// First and second moment estimates for every parameter tensor, plus the
/// step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: LstmParams,
    second_moment: LstmParams,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(shape: super::NetShape, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: LstmParams::zeros(shape),
            second_moment: LstmParams::zeros(shape),
            step_count: 0,
        }
    }

    pub fn apply(&mut self, params: &mut LstmParams, grads: &LstmParams) -> Result<()> {
        if params.shape != grads.shape || params.shape != self.first_moment.shape {
            return Err(Error::InvalidArgument("adam: parameter shape mismatch".into()));
        }
        self.step_count += 1;
        let step = self.step_count;
        let cfg = self.config;
        let g = grads.tensors();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(g)
            .zip(self.first_moment.tensors_mut())
            .zip(self.second_moment.tensors_mut())
        {
            adam_update(p, g, m, v, step, &cfg);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetShape;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let shape = NetShape::new(3, 4, 2);
        let mut params = LstmParams::init(shape, 1);
        let before = params.clone();
        let zero = LstmParams::zeros(shape);
        let mut state = AdamState::new(shape, AdamConfig::default());
        for _ in 0..50 {
            state.apply(&mut params, &zero).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // With zero moments, the first update is lr * g / (|g| + eps): a
        // sign-like step of magnitude at most lr regardless of |g|.
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        for g in [1e-3, 1.0, 1e3] {
            let mut p = [5.0];
            let mut m = [0.0];
            let mut v = [0.0];
            adam_update(&mut p, &[g], &mut m, &mut v, 1, &cfg);
            let delta = p[0] - 5.0;
            assert!(delta < 0.0);
            assert!(delta.abs() <= cfg.learning_rate + 1e-12);
            assert!(delta.abs() >= cfg.learning_rate * 0.99, "g = {g}, delta = {delta}");
        }
    }

    #[test]
    fn scalar_adam_converges_on_quadratic_bowl() {
        // f(w) = w^2, w0 = 1, lr 0.01: |w| < 0.01 after 2000 steps.
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        let mut w = [1.0];
        let mut m = [0.0];
        let mut v = [0.0];
        for step in 1..=2000 {
            let g = [2.0 * w[0]];
            adam_update(&mut w, &g, &mut m, &mut v, step, &cfg);
        }
        assert!(w[0].abs() < 0.01, "w = {}", w[0]);
    }

    #[test]
    fn state_walks_all_tensors() {
        let shape = NetShape::new(2, 3, 2);
        let mut params = LstmParams::zeros(shape);
        let mut grads = LstmParams::zeros(shape);
        for t in grads.tensors_mut() {
            for v in t.iter_mut() {
                *v = 1.0;
            }
        }
        let mut state = AdamState::new(shape, AdamConfig::default());
        state.apply(&mut params, &grads).unwrap();
        for t in params.tensors() {
            assert!(t.iter().all(|v| *v < 0.0), "every tensor moved against the gradient");
        }
    }
}
