//! Fully connected layers, applied either to `[batch, features]` matrices or
//! independently at every timestep of a `[batch, time, features]` sequence.

use ndarray::{ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Generation, GradientSet, Parameterized};
use crate::tensor::{
    check_feature_dim, flatten_time, glorot_uniform, unflatten_time, Matrix, Sequence, Tensor,
    Vector,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Matrix) {
        if self == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    x: Matrix,
    /// Post-activation output, used as the ReLU mask.
    y: Matrix,
    generation: Generation,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub kernel: Matrix,
    pub bias: Vector,
}

impl GradientSet for DenseGrads {
    fn into_tensors(self) -> Vec<Tensor> {
        vec![self.kernel.into_dyn(), self.bias.into_dyn()]
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    kernel: Matrix,
    bias: Vector,
    activation: Activation,
    generation: Generation,
}

impl Dense {
    pub fn new(kernel: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if kernel.ncols() != bias.len() {
            return Err(Error::Shape(format!(
                "dense kernel has {} units but bias has {}",
                kernel.ncols(),
                bias.len()
            )));
        }
        Ok(Dense {
            kernel,
            bias,
            activation,
            generation: Generation::default(),
        })
    }

    /// Glorot-uniform kernel, zero bias.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, n_in: usize, units: usize, activation: Activation) -> Self {
        Dense {
            kernel: glorot_uniform(rng, n_in, units),
            bias: Vector::zeros(units),
            activation,
            generation: Generation::default(),
        }
    }

    pub fn kernel(&self) -> &Matrix {
        &self.kernel
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn n_in(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn units(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        check_feature_dim("dense layer", x.ncols(), self.n_in())?;
        let mut y = x.dot(&self.kernel) + &self.bias;
        self.activation.apply(&mut y);
        let cache = DenseCache {
            x: x.clone(),
            y: y.clone(),
            generation: self.generation,
        };
        Ok((y, cache))
    }

    /// Set `want_input` to false to skip the input gradient of a first layer.
    pub fn backward(
        &self,
        cache: DenseCache,
        grad_out: &Matrix,
        want_input: bool,
    ) -> Result<(Option<Matrix>, DenseGrads)> {
        self.generation.check(cache.generation, "dense layer")?;
        if cache.x.ncols() != self.n_in() || cache.y.ncols() != self.units() {
            return Err(Error::StaleCache("dense cache shape differs from layer".into()));
        }
        if grad_out.dim() != cache.y.dim() {
            return Err(Error::Shape(format!(
                "dense backward: grad_out {:?} vs output {:?}",
                grad_out.dim(),
                cache.y.dim()
            )));
        }
        let mut dz = grad_out.clone();
        if self.activation == Activation::Relu {
            ndarray::Zip::from(&mut dz)
                .and(&cache.y)
                .for_each(|d, &y| {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                });
        }
        let grads = DenseGrads {
            kernel: cache.x.t().dot(&dz),
            bias: dz.sum_axis(Axis(0)),
        };
        let dx = want_input.then(|| dz.dot(&self.kernel.t()));
        Ok((dx, grads))
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("kernel", self.kernel.view().into_dyn()),
            ("bias", self.bias.view().into_dyn()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        self.generation.bump();
        vec![
            ("kernel", self.kernel.view_mut().into_dyn()),
            ("bias", self.bias.view_mut().into_dyn()),
        ]
    }
}

/// A [`Dense`] layer shared across timesteps.
#[derive(Clone, Debug)]
pub struct TimeDistributedDense {
    inner: Dense,
}

impl TimeDistributedDense {
    pub fn new(inner: Dense) -> Self {
        TimeDistributedDense { inner }
    }

    pub fn inner(&self) -> &Dense {
        &self.inner
    }

    pub fn forward(&self, x: &Sequence) -> Result<(Sequence, DenseCache)> {
        let (b, t, _) = x.dim();
        let (y, cache) = self.inner.forward(&flatten_time(x))?;
        Ok((unflatten_time(y, b, t), cache))
    }

    pub fn backward(
        &self,
        cache: DenseCache,
        grad_out: &Sequence,
        want_input: bool,
    ) -> Result<(Option<Sequence>, DenseGrads)> {
        let (b, t, _) = grad_out.dim();
        let (dx, grads) = self.inner.backward(cache, &flatten_time(grad_out), want_input)?;
        Ok((dx.map(|m| unflatten_time(m, b, t)), grads))
    }
}

impl Parameterized for TimeDistributedDense {
    fn params(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        self.inner.params()
    }

    fn params_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        self.inner.params_mut()
    }
}
