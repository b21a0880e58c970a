//! Bias-corrected Adam, one state per network.

use super::mlp::{MlpGrads, MlpParams};

#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: MlpGrads,
    pub v: MlpGrads,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_lr(params: &MlpParams, lr: f64) -> Self {
        AdamState {
            lr,
            ..AdamState::new(params)
        }
    }

    /// One Adam step over every parameter tensor.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..6 {
            let p = params.tensor_mut(i);
            let g = grads.tensor(i);
            let m = self.m.tensor_mut(i);
            let v = self.v.tensor_mut(i);
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
