//! Adam with decoupled weight decay, operating on flat parameter vectors.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(num_params: usize, learning_rate: f64, weight_decay: f64) -> Self {
        OptimizerState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update in place: theta -= lr * (mhat / (sqrt(vhat) + eps) +
    /// wd * theta).
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer holds {} parameters, got theta {} / grad {}",
                self.m.len(),
                theta.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            theta[i] -= self.learning_rate
                * (mhat / (vhat.sqrt() + self.epsilon) + self.weight_decay * theta[i]);
        }
        Ok(())
    }
}
