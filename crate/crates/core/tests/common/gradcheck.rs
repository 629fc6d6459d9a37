//! One finite-difference check per layer kind. Each function builds a random
//! small instance from `seed`, differentiates the probe loss `sum(w * y)`
//! analytically through the layer and numerically through a forward
//! evaluation, and returns the largest norm-wise relative error.

use ndarray::{Ix1, Ix2, Ix3};
use qlifcast::layers::{Activation, BatchNorm, BatchNormConfig, Dense, Dropout, Lstm, TimeDistributedDense};
use qlifcast::neuron::{LifHyper, LifLayer, LifLayerParams, QlifHyper, QlifLayer, QlifLayerParams};
use qlifcast::tensor::{Matrix, Sequence, Tensor, Vector};
use rand::Rng;

use super::{lif_oracle, max_relative_error, numeric_gradient, probe, qlif_oracle, rng, uniform, Output};

pub const STEP: f64 = 1e-6;

fn m(t: &Tensor) -> Matrix {
    t.clone().into_dimensionality::<Ix2>().unwrap()
}

fn v(t: &Tensor) -> Vector {
    t.clone().into_dimensionality::<Ix1>().unwrap()
}

fn s(t: &Tensor) -> Sequence {
    t.clone().into_dimensionality::<Ix3>().unwrap()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SpikeCoverage {
    pub spikes: usize,
    pub decays: usize,
    pub steps: usize,
}

pub fn qlif(seed: u64) -> (f64, SpikeCoverage) {
    let mut r = rng(seed);
    let (b, t, i, n) = (r.random_range(1..4), r.random_range(2..6), r.random_range(1..5), r.random_range(1..5));
    let x = uniform(&mut r, &[b, t, i], -0.5, 1.5);
    let kernel = uniform(&mut r, &[i, n], -1.5, 1.5);
    let theta = uniform(&mut r, &[n], 0.1, 2.0);
    let tau = uniform(&mut r, &[n], 0.5, 20.0);
    let w = uniform(&mut r, &[b, t, n], -1.0, 1.0);
    let hyper = QlifHyper::default();
    let center = hyper.threshold;

    let layer = QlifLayer::new(
        QlifLayerParams { kernel: m(&kernel), theta: v(&theta), tau_raw: v(&tau) },
        hyper,
    )
    .unwrap();
    let (_, cache) = layer.forward(&s(&x)).unwrap();
    let (gx, g) = layer.backward(cache, &s(&w)).unwrap();
    let analytic = vec![gx.into_dyn(), g.kernel.into_dyn(), g.theta.into_dyn(), g.tau_raw.into_dyn()];

    let (_, branches) = qlif_oracle(&s(&x), &kernel, &theta, &tau, hyper.threshold, hyper.t1, center, Output::Hard, None);
    let numeric = numeric_gradient(&[x, kernel, theta, tau], |p| {
        let (y, _) = qlif_oracle(&s(&p[0]), &p[1], &p[2], &p[3], hyper.threshold, hyper.t1, center, Output::Relaxed, Some(&branches));
        probe(&w, &y.into_dyn())
    }, STEP);
    let flat = |f: &Vec<Vec<Vec<bool>>>| f.iter().flatten().flatten().filter(|v| **v).count();
    let coverage = SpikeCoverage {
        spikes: flat(&branches.spike),
        decays: b * t * n - flat(&branches.gate),
        steps: b * t * n,
    };
    (max_relative_error(&analytic, &numeric), coverage)
}

pub fn lif(seed: u64) -> (f64, SpikeCoverage) {
    let mut r = rng(seed);
    let (b, t, i, n) = (r.random_range(1..4), r.random_range(2..6), r.random_range(1..5), r.random_range(1..5));
    let x = uniform(&mut r, &[b, t, i], -0.5, 1.5);
    let kernel = uniform(&mut r, &[i, n], -2.0, 3.0);
    let bias = uniform(&mut r, &[n], -0.5, 1.0);
    let tau = uniform(&mut r, &[n], 0.5, 6.0);
    let w = uniform(&mut r, &[b, t, n], -1.0, 1.0);
    let hyper = LifHyper::default();

    let layer = LifLayer::new(
        LifLayerParams { kernel: m(&kernel), bias: v(&bias), tau_raw: v(&tau) },
        hyper,
    )
    .unwrap();
    let (_, cache) = layer.forward(&s(&x)).unwrap();
    let (gx, g) = layer.backward(cache, &s(&w)).unwrap();
    let analytic = vec![gx.into_dyn(), g.kernel.into_dyn(), g.bias.into_dyn(), g.tau_raw.into_dyn()];

    let (_, branches) = lif_oracle(&s(&x), &kernel, &bias, &tau, hyper.threshold, Output::Hard, None);
    let numeric = numeric_gradient(&[x, kernel, bias, tau], |p| {
        let (y, _) = lif_oracle(&s(&p[0]), &p[1], &p[2], &p[3], hyper.threshold, Output::Relaxed, Some(&branches));
        probe(&w, &y.into_dyn())
    }, STEP);
    let spikes = branches.spike.iter().flatten().flatten().filter(|v| **v).count();
    (max_relative_error(&analytic, &numeric), SpikeCoverage { spikes, decays: 0, steps: b * t * n })
}

pub fn time_distributed_dense(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, t, i, u) = (r.random_range(1..4), r.random_range(1..5), r.random_range(1..5), r.random_range(1..6));
    let x = uniform(&mut r, &[b, t, i], -1.0, 1.0);
    let kernel = uniform(&mut r, &[i, u], -1.0, 1.0);
    let bias = uniform(&mut r, &[u], -0.5, 0.5);
    let w = uniform(&mut r, &[b, t, u], -1.0, 1.0);
    let build = |k: &Tensor, bi: &Tensor| TimeDistributedDense::new(Dense::new(m(k), v(bi), Activation::Relu).unwrap());

    let layer = build(&kernel, &bias);
    let (_, cache) = layer.forward(&s(&x)).unwrap();
    let (gx, g) = layer.backward(cache, &s(&w), true).unwrap();
    let analytic = vec![gx.unwrap().into_dyn(), g.kernel.into_dyn(), g.bias.into_dyn()];
    let numeric = numeric_gradient(&[x, kernel, bias], |p| {
        probe(&w, &build(&p[1], &p[2]).forward(&s(&p[0])).unwrap().0.into_dyn())
    }, STEP);
    max_relative_error(&analytic, &numeric)
}

/// Dropout with its mask held fixed is linear in the input.
pub fn dropout(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, t, c) = (r.random_range(1..4), r.random_range(1..5), r.random_range(1..6));
    let rate = r.random_range(0.05..0.6);
    let x = uniform(&mut r, &[b, t, c], -1.0, 1.0);
    let w = uniform(&mut r, &[b, t, c], -1.0, 1.0);
    let layer = Dropout::new(rate).unwrap();
    let mask_seed = seed.wrapping_mul(31).wrapping_add(7);

    let (_, cache) = layer.forward(&s(&x), true, &mut rng(mask_seed));
    let gx = layer.backward(cache, &s(&w)).unwrap();
    let numeric = numeric_gradient(&[x], |p| {
        probe(&w, &layer.forward(&s(&p[0]), true, &mut rng(mask_seed)).0.into_dyn())
    }, STEP);
    max_relative_error(&[gx.into_dyn()], &numeric)
}

pub fn batchnorm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, t, c) = (r.random_range(2..4), r.random_range(1..5), r.random_range(1..5));
    let x = uniform(&mut r, &[b, t, c], -2.0, 2.0);
    let gamma = uniform(&mut r, &[c], 0.5, 1.5);
    let beta = uniform(&mut r, &[c], -0.5, 0.5);
    let w = uniform(&mut r, &[b, t, c], -1.0, 1.0);
    let build = |g: &Tensor, be: &Tensor| {
        let mut bn = BatchNorm::new(c, BatchNormConfig::default());
        bn.gamma = v(g);
        bn.beta = v(be);
        bn
    };

    let layer = build(&gamma, &beta);
    let (_, cache) = layer.forward(&s(&x), true).unwrap();
    let (gx, g) = layer.backward(cache, &s(&w)).unwrap();
    let analytic = vec![gx.into_dyn(), g.gamma.into_dyn(), g.beta.into_dyn()];
    let numeric = numeric_gradient(&[x, gamma, beta], |p| {
        probe(&w, &build(&p[1], &p[2]).forward(&s(&p[0]), true).unwrap().0.into_dyn())
    }, STEP);
    max_relative_error(&analytic, &numeric)
}

pub fn lstm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, t, i, u) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..4), r.random_range(1..4));
    let x = uniform(&mut r, &[b, t, i], -1.0, 1.0);
    let kernel = uniform(&mut r, &[i, 4 * u], -0.8, 0.8);
    let recurrent = uniform(&mut r, &[u, 4 * u], -0.8, 0.8);
    let bias = uniform(&mut r, &[4 * u], -0.5, 0.5);
    let w = uniform(&mut r, &[b, u], -1.0, 1.0);
    let build = |k: &Tensor, rc: &Tensor, bi: &Tensor| Lstm::new(m(k), m(rc), v(bi)).unwrap();

    let layer = build(&kernel, &recurrent, &bias);
    let (_, cache) = layer.forward(&s(&x)).unwrap();
    let (gx, g) = layer.backward(cache, &m(&w)).unwrap();
    let analytic = vec![gx.into_dyn(), g.kernel.into_dyn(), g.recurrent.into_dyn(), g.bias.into_dyn()];
    let numeric = numeric_gradient(&[x, kernel, recurrent, bias], |p| {
        probe(&w, &build(&p[1], &p[2], &p[3]).forward(&s(&p[0])).unwrap().0.into_dyn())
    }, STEP);
    max_relative_error(&analytic, &numeric)
}

/// Plain dense layer: ReLU for the hidden head layers, linear for the output.
pub fn dense(seed: u64, activation: Activation) -> f64 {
    let mut r = rng(seed);
    let (b, i, u) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..6));
    let x = uniform(&mut r, &[b, i], -1.0, 1.0);
    let kernel = uniform(&mut r, &[i, u], -1.0, 1.0);
    let bias = uniform(&mut r, &[u], -0.5, 0.5);
    let w = uniform(&mut r, &[b, u], -1.0, 1.0);
    let build = |k: &Tensor, bi: &Tensor| Dense::new(m(k), v(bi), activation).unwrap();

    let layer = build(&kernel, &bias);
    let (_, cache) = layer.forward(&m(&x)).unwrap();
    let (gx, g) = layer.backward(cache, &m(&w), true).unwrap();
    let analytic = vec![gx.unwrap().into_dyn(), g.kernel.into_dyn(), g.bias.into_dyn()];
    let numeric = numeric_gradient(&[x, kernel, bias], |p| {
        probe(&w, &build(&p[1], &p[2]).forward(&m(&p[0])).unwrap().0.into_dyn())
    }, STEP);
    max_relative_error(&analytic, &numeric)
}
