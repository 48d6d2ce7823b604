use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    name: String,
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Adam optimiser state for an ordered list of named parameter buffers.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new<S: AsRef<str>>(config: AdamConfig, params: &[(S, usize)]) -> Self {
        let moments = params
            .iter()
            .map(|(name, len)| Moments {
                name: name.as_ref().to_string(),
                first: vec![0.0; *len],
                second: vec![0.0; *len],
            })
            .collect();
        Self {
            config,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// One bias-corrected Adam update. `params[i]` and `grads[i]` must match
    /// the shape registered for the i-th buffer. Gradients are validated
    /// before any parameter is touched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != self.moments.len() {
            return Err(Error::shape("AdamState::step", self.moments.len(), params.len().min(grads.len())));
        }
        for ((m, p), g) in self.moments.iter().zip(params.iter()).zip(grads) {
            if p.len() != m.first.len() || g.len() != m.first.len() {
                return Err(Error::shape("AdamState::step", m.first.len(), format!("{} / {}", p.len(), g.len())));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of `{}` at index {i}", m.name)));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for ((m, p), g) in self.moments.iter_mut().zip(params.iter_mut()).zip(grads) {
            for i in 0..g.len() {
                let gi = g[i];
                m.first[i] = beta1 * m.first[i] + (1.0 - beta1) * gi;
                m.second[i] = beta2 * m.second[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m.first[i] / bc1;
                let v_hat = m.second[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
