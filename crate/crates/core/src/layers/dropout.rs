//! Inverted dropout with per-element masks.

use ndarray::{ArrayD, Dimension, Zip};
use rand::Rng;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    rate: f64,
}

/// Scaled keep-mask (`0` or `1 / (1 - rate)`); `None` when the layer acted as
/// the identity.
#[derive(Clone, Debug)]
pub struct DropoutCache {
    mask: Option<ArrayD<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<D: Dimension, R: Rng + ?Sized>(
        &self,
        x: &ndarray::Array<f64, D>,
        training: bool,
        rng: &mut R,
    ) -> (ndarray::Array<f64, D>, DropoutCache) {
        if !training || self.rate == 0.0 {
            return (x.clone(), DropoutCache { mask: None });
        }
        let scale = 1.0 / (1.0 - self.rate);
        let mask = x.map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { scale });
        let y = x * &mask;
        (y, DropoutCache { mask: Some(mask.into_dyn()) })
    }

    /// Reuses the forward mask.
    pub fn backward<D: Dimension>(
        &self,
        cache: DropoutCache,
        grad_out: &ndarray::Array<f64, D>,
    ) -> Result<ndarray::Array<f64, D>> {
        let Some(mask) = cache.mask else {
            return Ok(grad_out.clone());
        };
        if mask.shape() != grad_out.shape() {
            return Err(Error::StaleCache(format!(
                "dropout mask {:?} vs grad {:?}",
                mask.shape(),
                grad_out.shape()
            )));
        }
        let mut g = grad_out.clone();
        Zip::from(&mut g)
            .and(&mask.into_dimensionality::<D>().expect("same rank as grad"))
            .for_each(|g, &m| *g *= m);
        Ok(g)
    }
}
