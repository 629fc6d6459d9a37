//! Adam with L2 regularization and a staircase exponential learning rate.

use ndarray::{ArrayViewMutD, Zip};
use serde::{Deserialize, Serialize};

use crate::tensor::{all_finite, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr0: f64,
    /// Learning-rate multiplier applied once per epoch.
    pub decay_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 coefficient; adds `2 * l2 * w` to the gradient of regularized tensors.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr0: 1e-3,
            decay_rate: 0.96,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            l2: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr0 > 0.0
            && self.decay_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.l2 >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay_rate.powi(epoch as i32)
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// One update of every parameter. `params`, `grads` and `regularized`
    /// are aligned; a non-finite gradient aborts before anything is written.
    pub fn step(
        &mut self,
        params: Vec<(String, ArrayViewMutD<'_, f64>)>,
        grads: &[Tensor],
        regularized: &[bool],
        epoch: usize,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != regularized.len() {
            return Err(Error::Shape(format!(
                "optimizer got {} parameters, {} gradients, {} L2 flags",
                params.len(),
                grads.len(),
                regularized.len()
            )));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient of {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !all_finite(g.iter()) {
                return Err(Error::Numeric(format!("non-finite gradient for {name}")));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() {
            return Err(Error::Shape("optimizer state tracks a different parameter set".into()));
        }

        self.step += 1;
        let AdamConfig {
            beta1, beta2, epsilon, l2, ..
        } = self.config;
        let lr = self.config.learning_rate(epoch);
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        for (idx, ((_, mut p), g)) in params.into_iter().zip(grads).enumerate() {
            let decay = if regularized[idx] { 2.0 * l2 } else { 0.0 };
            Zip::from(&mut p)
                .and(g)
                .and(&mut self.m[idx])
                .and(&mut self.v[idx])
                .for_each(|w, &g, m, v| {
                    let g = g + decay * *w;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / correction1;
                    let v_hat = *v / correction2;
                    *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
                });
        }
        Ok(())
    }
}
