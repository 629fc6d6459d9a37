//! Mini-batch training with early stopping on a chronological validation tail.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{AdamConfig, AdamState};
use crate::model::{mse_loss, Model};
use crate::tensor::{Matrix, Sequence};
use crate::{Error, Result};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of the training windows, taken from the end, held out for
    /// validation.
    pub validation_fraction: f64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 15,
            patience: 5,
            validation_fraction: 0.1,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Stops once the monitored loss has not strictly improved for `patience`
/// consecutive epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            StopDecision {
                improved: true,
                stop: false,
            }
        } else {
            self.wait += 1;
            StopDecision {
                improved: false,
                stop: self.wait >= self.patience,
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    /// Epoch whose weights were restored.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Splits `n` training windows into `(fit, validation)` counts, keeping the
/// validation windows at the chronological end.
pub fn validation_split(n: usize, fraction: f64) -> Result<(usize, usize)> {
    let fit = (n as f64 * (1.0 - fraction)).floor() as usize;
    if fit < 2 || fit >= n {
        return Err(Error::Data(format!(
            "{n} training windows cannot be split with validation fraction {fraction}"
        )));
    }
    Ok((fit, n - fit))
}

/// Trains `model` in place on standardized windows and restores the weights
/// of the best validation epoch.
pub fn train(model: &mut Model, x: &Sequence, y: &Matrix, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = x.dim().0;
    if y.nrows() != n {
        return Err(Error::Shape(format!("{n} windows but {} targets", y.nrows())));
    }
    let (n_fit, _) = validation_split(n, cfg.validation_fraction)?;
    let x_fit = x.slice(ndarray::s![..n_fit, .., ..]);
    let y_fit = y.slice(ndarray::s![..n_fit, ..]);
    let x_val = x.slice(ndarray::s![n_fit.., .., ..]).to_owned();
    let y_val = y.slice(ndarray::s![n_fit.., ..]).to_owned();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut optimizer = AdamState::new(cfg.optimizer);
    let regularized = model.regularized_mask();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_model = model.clone();
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..n_fit).collect();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = cfg.optimizer.learning_rate(epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x_fit.select(Axis(0), batch);
            let yb = y_fit.select(Axis(0), batch);
            let (pred, cache) = model.forward_train(&xb, &mut dropout_rng)?;
            let (loss, grad) = mse_loss(&pred, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss at epoch {}", epoch + 1)));
            }
            loss_sum += loss * batch.len() as f64;
            model.update_norm_stats(&cache);
            let grads = model.backward(cache, &grad)?;
            optimizer.step(model.named_params_mut(), &grads, &regularized, epoch)?;
        }
        let val_loss = mse_loss(&model.predict(&x_val)?, &y_val)?.0;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss at epoch {}", epoch + 1)));
        }
        let record = TrainRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / n_fit as f64,
            val_loss,
            lr,
        };
        log::debug!("{:?}", record);
        records.push(record);
        let decision = stopper.observe(epoch + 1, val_loss);
        if decision.improved {
            best_model = model.clone();
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    *model = best_model;
    Ok(TrainOutcome {
        records,
        best_epoch: stopper.best_epoch(),
        stopped_early,
    })
}
