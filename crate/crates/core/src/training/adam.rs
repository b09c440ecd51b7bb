use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators of bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    params: AdamParams,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize, params: AdamParams) -> Self {
        AdamState {
            params,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// `θ ← θ − lr · m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if theta.len() != self.first.len() || grad.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                what: "adam parameter vector",
                expected: self.first.len(),
                got: if theta.len() != self.first.len() {
                    theta.len()
                } else {
                    grad.len()
                },
            });
        }
        self.step += 1;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for k in 0..theta.len() {
            let g = grad[k];
            self.first[k] = beta1 * self.first[k] + (1.0 - beta1) * g;
            self.second[k] = beta2 * self.second[k] + (1.0 - beta2) * g * g;
            let m_hat = self.first[k] / c1;
            let v_hat = self.second[k] / c2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
