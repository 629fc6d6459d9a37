//! Non-spiking layers with explicit forward/backward passes, plus the Adam
//! optimizer.
//!
//! Every forward call returns a cache that is consumed by exactly one
//! backward call. Caches record the parameter generation they were produced
//! under; a backward call after the parameters changed is rejected.

pub mod adam;
pub mod batchnorm;
pub mod dense;
pub mod dropout;
pub mod lstm;

use ndarray::{ArrayViewD, ArrayViewMutD};

use crate::tensor::Tensor;
use crate::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache, BatchNormConfig, BatchNormGrads};
pub use dense::{Activation, Dense, DenseCache, DenseGrads, TimeDistributedDense};
pub use dropout::{Dropout, DropoutCache};
pub use lstm::{Lstm, LstmCache, LstmGrads};

/// Counter bumped whenever a layer hands out mutable access to its
/// parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Generation(u64);

impl Generation {
    pub(crate) fn bump(&mut self) {
        self.0 = self.0.wrapping_add(1);
    }

    pub(crate) fn check(self, cached: Generation, layer: &str) -> Result<()> {
        if self != cached {
            return Err(Error::StaleCache(format!(
                "{layer}: parameters changed since the forward pass"
            )));
        }
        Ok(())
    }
}

/// Layers owning trainable parameters.
///
/// `params` and `params_mut` list tensors in the same fixed order as the
/// layer's gradient set.
pub trait Parameterized {
    fn params(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)>;

    fn params_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }
}

/// Gradients of a [`Parameterized`] layer, in parameter order.
pub trait GradientSet {
    fn into_tensors(self) -> Vec<Tensor>;
}
