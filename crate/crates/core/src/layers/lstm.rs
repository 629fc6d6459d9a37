//! LSTM returning only its final hidden state.
//!
//! Weights use the fused layout `[input, forget, candidate, output]` along the
//! last axis: `kernel` is `[n_in, 4u]`, `recurrent` is `[u, 4u]` and `bias`
//! is `[4u]`.

use ndarray::{s, Array3, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::{Generation, GradientSet, Parameterized};
use crate::tensor::{check_feature_dim, glorot_uniform, Matrix, Sequence, Tensor, Vector};
use crate::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub kernel: Matrix,
    pub recurrent: Matrix,
    pub bias: Vector,
    generation: Generation,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Sequence,
    /// Activated gates `[batch, time, 4u]`.
    gates: Array3<f64>,
    /// Cell states `[batch, time + 1, u]`; index 0 is the zero initial state.
    cells: Array3<f64>,
    hidden: Array3<f64>,
    generation: Generation,
}

#[derive(Clone, Debug)]
pub struct LstmGrads {
    pub kernel: Matrix,
    pub recurrent: Matrix,
    pub bias: Vector,
}

impl GradientSet for LstmGrads {
    fn into_tensors(self) -> Vec<Tensor> {
        vec![
            self.kernel.into_dyn(),
            self.recurrent.into_dyn(),
            self.bias.into_dyn(),
        ]
    }
}

impl Lstm {
    pub fn new(kernel: Matrix, recurrent: Matrix, bias: Vector) -> Result<Self> {
        let u = recurrent.nrows();
        if kernel.ncols() != 4 * u || recurrent.ncols() != 4 * u || bias.len() != 4 * u {
            return Err(Error::Shape(format!(
                "LSTM weights inconsistent with {u} units: kernel {:?}, recurrent {:?}, bias {}",
                kernel.dim(),
                recurrent.dim(),
                bias.len()
            )));
        }
        Ok(Lstm {
            kernel,
            recurrent,
            bias,
            generation: Generation::default(),
        })
    }

    /// Glorot-uniform kernels, zero bias except a forget-gate bias of one.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, n_in: usize, units: usize) -> Self {
        let mut bias = Vector::zeros(4 * units);
        bias.slice_mut(s![units..2 * units]).fill(1.0);
        Lstm {
            kernel: glorot_uniform(rng, n_in, 4 * units),
            recurrent: glorot_uniform(rng, units, 4 * units),
            bias,
            generation: Generation::default(),
        }
    }

    pub fn zeros(n_in: usize, units: usize) -> Self {
        Lstm {
            kernel: Matrix::zeros((n_in, 4 * units)),
            recurrent: Matrix::zeros((units, 4 * units)),
            bias: Vector::zeros(4 * units),
            generation: Generation::default(),
        }
    }

    pub fn units(&self) -> usize {
        self.recurrent.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.kernel.nrows()
    }

    /// Returns `h_T` with shape `[batch, units]`.
    pub fn forward(&self, x: &Sequence) -> Result<(Matrix, LstmCache)> {
        let (batch, steps, n_in) = x.dim();
        check_feature_dim("LSTM", n_in, self.n_in())?;
        let u = self.units();
        let mut gates = Array3::<f64>::zeros((batch, steps, 4 * u));
        let mut cells = Array3::<f64>::zeros((batch, steps + 1, u));
        let mut hidden = Array3::<f64>::zeros((batch, steps + 1, u));

        for t in 0..steps {
            let h_prev = hidden.slice(s![.., t, ..]);
            let mut z = x.slice(s![.., t, ..]).dot(&self.kernel) + h_prev.dot(&self.recurrent) + &self.bias;
            z.slice_mut(s![.., 0..2 * u]).mapv_inplace(sigmoid);
            z.slice_mut(s![.., 2 * u..3 * u]).mapv_inplace(f64::tanh);
            z.slice_mut(s![.., 3 * u..]).mapv_inplace(sigmoid);
            for b in 0..batch {
                for k in 0..u {
                    let (i, f, g, o) = (z[[b, k]], z[[b, u + k]], z[[b, 2 * u + k]], z[[b, 3 * u + k]]);
                    let c = f * cells[[b, t, k]] + i * g;
                    cells[[b, t + 1, k]] = c;
                    hidden[[b, t + 1, k]] = o * c.tanh();
                }
            }
            gates.slice_mut(s![.., t, ..]).assign(&z);
        }

        let h_last = hidden.slice(s![.., steps, ..]).to_owned();
        let cache = LstmCache {
            x: x.clone(),
            gates,
            cells,
            hidden,
            generation: self.generation,
        };
        Ok((h_last, cache))
    }

    /// Unrolls through all timesteps from the gradient of `h_T`.
    pub fn backward(&self, cache: LstmCache, grad_h: &Matrix) -> Result<(Sequence, LstmGrads)> {
        self.generation.check(cache.generation, "LSTM")?;
        let (batch, steps, n_in) = cache.x.dim();
        let u = self.units();
        if n_in != self.n_in() || cache.gates.dim() != (batch, steps, 4 * u) {
            return Err(Error::StaleCache("LSTM cache shape differs from layer".into()));
        }
        if grad_h.dim() != (batch, u) {
            return Err(Error::Shape(format!(
                "LSTM backward: grad {:?} vs hidden {:?}",
                grad_h.dim(),
                (batch, u)
            )));
        }

        let mut grad_x = Array3::zeros((batch, steps, n_in));
        let mut grads = LstmGrads {
            kernel: Matrix::zeros(self.kernel.raw_dim()),
            recurrent: Matrix::zeros(self.recurrent.raw_dim()),
            bias: Vector::zeros(4 * u),
        };
        let mut dh = grad_h.clone();
        let mut dc = Matrix::zeros((batch, u));
        let mut dz = Matrix::zeros((batch, 4 * u));

        for t in (0..steps).rev() {
            let z = cache.gates.slice(s![.., t, ..]);
            for b in 0..batch {
                for k in 0..u {
                    let (i, f, g, o) = (z[[b, k]], z[[b, u + k]], z[[b, 2 * u + k]], z[[b, 3 * u + k]]);
                    let c = cache.cells[[b, t + 1, k]];
                    let c_prev = cache.cells[[b, t, k]];
                    let tc = c.tanh();
                    let dhk = dh[[b, k]];
                    let dck = dc[[b, k]] + dhk * o * (1.0 - tc * tc);
                    dz[[b, k]] = dck * g * i * (1.0 - i);
                    dz[[b, u + k]] = dck * c_prev * f * (1.0 - f);
                    dz[[b, 2 * u + k]] = dck * i * (1.0 - g * g);
                    dz[[b, 3 * u + k]] = dhk * tc * o * (1.0 - o);
                    dc[[b, k]] = dck * f;
                }
            }
            let h_prev = cache.hidden.slice(s![.., t, ..]);
            grads.kernel += &cache.x.slice(s![.., t, ..]).t().dot(&dz);
            grads.recurrent += &h_prev.t().dot(&dz);
            grads.bias += &dz.sum_axis(Axis(0));
            grad_x.slice_mut(s![.., t, ..]).assign(&dz.dot(&self.kernel.t()));
            dh = dz.dot(&self.recurrent.t());
        }
        Ok((grad_x, grads))
    }
}

impl Parameterized for Lstm {
    fn params(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("kernel", self.kernel.view().into_dyn()),
            ("recurrent", self.recurrent.view().into_dyn()),
            ("bias", self.bias.view().into_dyn()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        self.generation.bump();
        vec![
            ("kernel", self.kernel.view_mut().into_dyn()),
            ("recurrent", self.recurrent.view_mut().into_dyn()),
            ("bias", self.bias.view_mut().into_dyn()),
        ]
    }
}
