use serde::{Deserialize, Serialize};

use super::HeadParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: HeadParams,
    pub second: HeadParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(shape_of: &HeadParams) -> Self {
        AdamState {
            config: AdamConfig::default(),
            first: HeadParams::zeros_like(shape_of),
            second: HeadParams::zeros_like(shape_of),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut HeadParams, grads: &HeadParams, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut().into_iter().zip(self.second.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
