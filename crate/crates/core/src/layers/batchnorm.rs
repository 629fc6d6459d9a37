//! Batch normalization over the channel (last) axis of a sequence.
//!
//! Training normalizes with the statistics of all `batch * time` rows;
//! inference uses exponential moving averages of those statistics.

use ndarray::{ArrayViewD, ArrayViewMutD, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::{Generation, GradientSet, Parameterized};
use crate::tensor::{check_feature_dim, flatten_time, unflatten_time, Matrix, Sequence, Tensor, Vector};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchNormConfig {
    pub epsilon: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            epsilon: 1e-3,
            momentum: 0.99,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Vector,
    pub beta: Vector,
    pub moving_mean: Vector,
    pub moving_var: Vector,
    config: BatchNormConfig,
    generation: Generation,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    x_hat: Matrix,
    inv_std: Vector,
    /// Batch statistics; absent in inference mode.
    batch_stats: Option<(Vector, Vector)>,
    generation: Generation,
}

impl BatchNormCache {
    pub fn batch_stats(&self) -> Option<(&Vector, &Vector)> {
        self.batch_stats.as_ref().map(|(m, v)| (m, v))
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub gamma: Vector,
    pub beta: Vector,
}

impl GradientSet for BatchNormGrads {
    fn into_tensors(self) -> Vec<Tensor> {
        vec![self.gamma.into_dyn(), self.beta.into_dyn()]
    }
}

impl BatchNorm {
    pub fn new(channels: usize, config: BatchNormConfig) -> Self {
        BatchNorm {
            gamma: Vector::ones(channels),
            beta: Vector::zeros(channels),
            moving_mean: Vector::zeros(channels),
            moving_var: Vector::ones(channels),
            config,
            generation: Generation::default(),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes `x` without touching the moving statistics; call
    /// [`BatchNorm::update_moving_stats`] with the returned cache afterwards.
    pub fn forward(&self, x: &Sequence, training: bool) -> Result<(Sequence, BatchNormCache)> {
        let (b, t, c) = x.dim();
        check_feature_dim("batch normalization", c, self.channels())?;
        let rows = flatten_time(x);
        let eps = self.config.epsilon;
        let (mean, var, batch_stats) = if training {
            if b * t < 2 {
                return Err(Error::Shape(format!(
                    "batch normalization needs at least 2 rows in training, got {}",
                    b * t
                )));
            }
            let mean = rows.mean_axis(Axis(0)).expect("non-empty batch");
            let var = (&rows - &mean).mapv(|d| d * d).mean_axis(Axis(0)).expect("non-empty batch");
            (mean.clone(), var.clone(), Some((mean, var)))
        } else {
            (self.moving_mean.clone(), self.moving_var.clone(), None)
        };
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let x_hat = (&rows - &mean) * &inv_std;
        let y = &x_hat * &self.gamma + &self.beta;
        let cache = BatchNormCache {
            x_hat,
            inv_std,
            batch_stats,
            generation: self.generation,
        };
        Ok((unflatten_time(y, b, t), cache))
    }

    pub fn update_moving_stats(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            let m = self.config.momentum;
            Zip::from(&mut self.moving_mean)
                .and(mean)
                .for_each(|mm, &bm| *mm = m * *mm + (1.0 - m) * bm);
            Zip::from(&mut self.moving_var)
                .and(var)
                .for_each(|mv, &bv| *mv = m * *mv + (1.0 - m) * bv);
        }
    }

    pub fn backward(&self, cache: BatchNormCache, grad_out: &Sequence) -> Result<(Sequence, BatchNormGrads)> {
        self.generation.check(cache.generation, "batch normalization")?;
        let (b, t, c) = grad_out.dim();
        if c != self.channels() || cache.x_hat.dim() != (b * t, c) {
            return Err(Error::StaleCache("batch normalization cache shape differs".into()));
        }
        let dy = flatten_time(grad_out);
        let grads = BatchNormGrads {
            gamma: (&dy * &cache.x_hat).sum_axis(Axis(0)),
            beta: dy.sum_axis(Axis(0)),
        };
        let dx_hat = &dy * &self.gamma;
        let dx = if cache.batch_stats.is_some() {
            let m = (b * t) as f64;
            let sum_dx_hat = dx_hat.sum_axis(Axis(0));
            let sum_dx_hat_xhat = (&dx_hat * &cache.x_hat).sum_axis(Axis(0));
            let centered = &dx_hat * m - &sum_dx_hat - &cache.x_hat * &sum_dx_hat_xhat;
            centered * &cache.inv_std / m
        } else {
            dx_hat * &cache.inv_std
        };
        Ok((unflatten_time(dx, b, t), grads))
    }

    /// Non-trainable state saved alongside the parameters.
    pub fn buffers(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("moving_mean", self.moving_mean.view().into_dyn()),
            ("moving_var", self.moving_var.view().into_dyn()),
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        vec![
            ("moving_mean", self.moving_mean.view_mut().into_dyn()),
            ("moving_var", self.moving_var.view_mut().into_dyn()),
        ]
    }
}

impl Parameterized for BatchNorm {
    fn params(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("gamma", self.gamma.view().into_dyn()),
            ("beta", self.beta.view().into_dyn()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        self.generation.bump();
        vec![
            ("gamma", self.gamma.view_mut().into_dyn()),
            ("beta", self.beta.view_mut().into_dyn()),
        ]
    }
}
