//! Dense float tensors.
//!
//! Tensors are plain `ndarray` arrays in row-major (standard) layout. The
//! aliases below name the shapes used throughout the crate: sequences are
//! `[batch, time, features]`, matrices are `[rows, cols]`.

use ndarray::{Array1, Array2, Array3, ArrayD};
use rand::Rng;

use crate::{Error, Result};

pub type Tensor = ArrayD<f64>;
pub type Sequence = Array3<f64>;
pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Fan-based uniform initialization with limit `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit))
}

/// Uniform samples in `[low, high)`.
pub fn uniform_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, low: f64, high: f64) -> Vector {
    Vector::from_shape_simple_fn(len, || rng.random_range(low..high))
}

pub(crate) fn check_feature_dim(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape(format!(
            "{what}: expected {expected} input features, got {got}"
        )));
    }
    Ok(())
}

/// Flattens `[batch, time, features]` into `[batch * time, features]`.
pub(crate) fn flatten_time(x: &Sequence) -> Matrix {
    let (b, t, f) = x.dim();
    x.to_shape((b * t, f))
        .expect("sequence reshapes to a matrix")
        .into_owned()
}

pub(crate) fn unflatten_time(m: Matrix, batch: usize, time: usize) -> Sequence {
    let f = m.ncols();
    // products such as `a.dot(&b.t())` may come back column-major
    let m = if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    };
    m.into_shape_with_order((batch, time, f))
        .expect("matrix rows split into batch and time")
}

pub(crate) fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}
