use crate::error::{Result, WsraError};

use super::tensor::Param;

/// Adam optimizer state over a fixed list of parameters.
#[derive(Debug)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &[Param], learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let first_moment = params.iter().map(|p| vec![0.0; p.borrow().numel()]).collect();
        let second_moment = params.iter().map(|p| vec![0.0; p.borrow().numel()]).collect();
        AdamState {
            step_count: 0,
            first_moment,
            second_moment,
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected update over all parameters; zeroes grads afterward.
    pub fn step(&mut self, params: &[Param]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(WsraError::Config(format!(
                "optimizer built for {} parameters, given {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for (k, p) in params.iter().enumerate() {
            let mut t = p.borrow_mut();
            let name = format!("param[{}]", k);
            let grad = t.grad.as_ref().ok_or(WsraError::MissingGrad { name })?.clone();
            if grad.len() != self.first_moment[k].len() {
                return Err(WsraError::Shape {
                    op: "adam_step".into(),
                    details: format!("moment buffer {} vs grad {}", self.first_moment[k].len(), grad.len()),
                });
            }
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..grad.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                t.values[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            t.zero_grad();
        }
        Ok(())
    }
}
