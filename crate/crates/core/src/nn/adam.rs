use serde::{Deserialize, Serialize};

use super::{NnError, ParamLayout};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(lr: f64) -> Self {
        AdamConfig { learning_rate: lr, ..Self::default() }
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Adam { config, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Applies one update in place.
    ///
    /// The whole update is rejected, leaving parameters and state untouched,
    /// if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], layout: &ParamLayout) -> Result<(), NnError> {
        if params.len() != self.m.len() {
            return Err(NnError::LengthMismatch { what: "parameters", expected: self.m.len(), got: params.len() });
        }
        if grads.len() != params.len() {
            return Err(NnError::LengthMismatch { what: "gradients", expected: params.len(), got: grads.len() });
        }
        if let Some((i, &g)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { param: layout.describe(i), value: g });
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
