//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the layer code under test: the spiking oracles are
//! plain scalar loops written straight from the neuron equations.

#![allow(dead_code)]

pub mod gradcheck;

use ndarray::{Array3, IxDyn};
use qlifcast::tensor::{Sequence, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAU_MIN: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], low: f64, high: f64) -> Tensor {
    Tensor::from_shape_simple_fn(IxDyn(shape), || rng.random_range(low..high))
}

pub fn atan_surrogate(u: f64) -> f64 {
    (std::f64::consts::PI * u).atan() / std::f64::consts::PI + 0.5
}

/// Branch decisions of one spiking forward pass, `[batch][time][neuron]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Branches {
    pub gate: Vec<Vec<Vec<bool>>>,
    pub spike: Vec<Vec<Vec<bool>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Output {
    /// Hard `{0, 1}` spikes.
    Hard,
    /// `surrogate(value - center)` in place of the spike.
    Relaxed,
}

fn alloc<T: Clone>(b: usize, t: usize, n: usize, v: T) -> Vec<Vec<Vec<T>>> {
    vec![vec![vec![v; n]; t]; b]
}

/// Scalar QLIF recurrence. With `frozen`, gates and resets follow the given
/// pattern instead of being recomputed.
#[allow(clippy::too_many_arguments)]
pub fn qlif_oracle(
    x: &Sequence,
    kernel: &Tensor,
    theta: &Tensor,
    tau_raw: &Tensor,
    threshold: f64,
    t1: f64,
    center: f64,
    output: Output,
    frozen: Option<&Branches>,
) -> (Sequence, Branches) {
    let (b_n, t_n, i_n) = x.dim();
    let n = kernel.shape()[1];
    let mut out = Array3::zeros((b_n, t_n, n));
    let mut br = Branches {
        gate: alloc(b_n, t_n, n, false),
        spike: alloc(b_n, t_n, n, false),
    };
    for b in 0..b_n {
        for j in 0..n {
            let tau = tau_raw[[j]].max(TAU_MIN);
            let mut alpha: f64 = 0.0;
            for t in 0..t_n {
                let mut a = 0.0;
                for i in 0..i_n {
                    a += x[[b, t, i]] * kernel[[i, j]];
                }
                let gate = frozen.map_or(a > 0.0, |f| f.gate[b][t][j]);
                let phi = 2.0 * alpha.sqrt().asin();
                let theta_in = if gate {
                    theta[[j]] * a
                } else {
                    -2.0 * (alpha * (-tau / t1).exp()).sqrt().asin()
                };
                let new = ((phi + theta_in) / 2.0).sin().powi(2);
                let spike = frozen.map_or(new >= threshold, |f| f.spike[b][t][j]);
                br.gate[b][t][j] = gate;
                br.spike[b][t][j] = spike;
                out[[b, t, j]] = match output {
                    Output::Hard => f64::from(u8::from(spike)),
                    Output::Relaxed => atan_surrogate(new - center),
                };
                alpha = if spike { 0.0 } else { new };
            }
        }
    }
    (out, br)
}

/// Scalar LIF recurrence with the same freezing rules as [`qlif_oracle`].
pub fn lif_oracle(
    x: &Sequence,
    kernel: &Tensor,
    bias: &Tensor,
    tau_raw: &Tensor,
    threshold: f64,
    output: Output,
    frozen: Option<&Branches>,
) -> (Sequence, Branches) {
    let (b_n, t_n, i_n) = x.dim();
    let n = kernel.shape()[1];
    let mut out = Array3::zeros((b_n, t_n, n));
    let mut br = Branches {
        gate: alloc(b_n, t_n, n, true),
        spike: alloc(b_n, t_n, n, false),
    };
    for b in 0..b_n {
        for j in 0..n {
            let beta = (-1.0 / tau_raw[[j]].max(TAU_MIN)).exp();
            let mut u = 0.0;
            for t in 0..t_n {
                let mut drive = bias[[j]];
                for i in 0..i_n {
                    drive += x[[b, t, i]] * kernel[[i, j]];
                }
                let new = beta * u + (1.0 - beta) * drive;
                let spike = frozen.map_or(new >= threshold, |f| f.spike[b][t][j]);
                br.spike[b][t][j] = spike;
                out[[b, t, j]] = match output {
                    Output::Hard => f64::from(u8::from(spike)),
                    Output::Relaxed => atan_surrogate(new - threshold),
                };
                u = if spike { 0.0 } else { new };
            }
        }
    }
    (out, br)
}

/// Weighted-sum probe loss `sum(w * y)`.
pub fn probe(w: &Tensor, y: &Tensor) -> f64 {
    w.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// Central finite differences of `loss` with respect to every entry of every
/// tensor in `point`.
pub fn numeric_gradient<F: Fn(&[Tensor]) -> f64>(point: &[Tensor], loss: F, h: f64) -> Vec<Tensor> {
    let mut work: Vec<Tensor> = point.to_vec();
    let mut grads = Vec::with_capacity(point.len());
    for k in 0..point.len() {
        let mut g = Tensor::zeros(point[k].raw_dim());
        for idx in 0..point[k].len() {
            let orig = point[k].as_slice().expect("standard layout")[idx];
            work[k].as_slice_mut().expect("standard layout")[idx] = orig + h;
            let up = loss(&work);
            work[k].as_slice_mut().expect("standard layout")[idx] = orig - h;
            let down = loss(&work);
            work[k].as_slice_mut().expect("standard layout")[idx] = orig;
            g.as_slice_mut().expect("standard layout")[idx] = (up - down) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

fn norm(t: &Tensor) -> f64 {
    t.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Norm-wise relative error `|a - n| / max(|a|, |n|)` per tensor; pairs whose
/// norms are both below `1e-10` count as exact.
pub fn relative_errors(analytic: &[Tensor], numeric: &[Tensor]) -> Vec<f64> {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            assert_eq!(a.shape(), n.shape());
            let scale = norm(a).max(norm(n));
            if scale < 1e-10 {
                0.0
            } else {
                norm(&(a - n)) / scale
            }
        })
        .collect()
}

pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    relative_errors(analytic, numeric).into_iter().fold(0.0, f64::max)
}
