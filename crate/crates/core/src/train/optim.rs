//! AdamW with decoupled weight decay and bias correction.

use crate::error::{Error, Result};
use crate::tensor::{Gradients, ParamStore};

#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamW {
    pub fn new(
        params: &ParamStore,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    ) -> Result<AdamW> {
        for (bound, name) in [(beta1, "beta1"), (beta2, "beta2")] {
            if !(0.0..1.0).contains(&bound) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1)")));
            }
        }
        if !(epsilon > 0.0) || !(weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(
                "epsilon must be positive and weight decay non-negative".into(),
            ));
        }
        let zeros: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, array)| vec![0.0; array.values().len()])
            .collect();
        Ok(AdamW {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One optimizer step. Decay is decoupled (applied to the pre-step value)
    /// and skipped for arrays flagged as non-decaying (biases, norm affines).
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.arrays().len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "optimizer state holds {} arrays, gradients hold {}",
                self.first_moment.len(),
                grads.arrays().len()
            )));
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for ((_, array), (grad, (m, v))) in params.iter_mut().zip(
            grads
                .arrays()
                .iter()
                .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut())),
        ) {
            if grad.len() != array.values().len() {
                return Err(Error::Shape(format!(
                    "gradient length {} does not match {:?}",
                    grad.len(),
                    array.name()
                )));
            }
            let decay = if array.decays() { self.weight_decay } else { 0.0 };
            let values = array.values_mut();
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let update = m_hat / (v_hat.sqrt() + self.epsilon);
                values[i] -= lr * (update + decay * values[i]);
            }
        }
        Ok(())
    }
}
