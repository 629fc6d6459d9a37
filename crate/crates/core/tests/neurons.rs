//! Spiking layers against scalar oracles, plus neuron-level invariants.

mod common;

use common::{lif_oracle, qlif_oracle, rng, uniform, Output};
use ndarray::{Array1, Ix1, Ix2, Ix3};
use proptest::prelude::*;
use qlifcast::neuron::{
    decay_angle, decode_angle, encode_state, lif_step, LifHyper, LifLayer, LifLayerParams, QlifHyper,
    QlifLayer, QlifLayerParams,
};
use qlifcast::tensor::Sequence;
use rand::Rng;

fn qlif_instance(seed: u64, shape: (usize, usize, usize), n: usize) -> (QlifLayer, Sequence) {
    let mut r = rng(seed);
    let (b, t, i) = shape;
    let x = uniform(&mut r, &[b, t, i], -1.5, 1.5).into_dimensionality::<Ix3>().unwrap();
    let params = QlifLayerParams {
        kernel: uniform(&mut r, &[i, n], -1.0, 1.0).into_dimensionality::<Ix2>().unwrap(),
        theta: uniform(&mut r, &[n], 0.2, 2.0).into_dimensionality::<Ix1>().unwrap(),
        tau_raw: uniform(&mut r, &[n], 0.5, 8.0).into_dimensionality::<Ix1>().unwrap(),
    };
    (QlifLayer::new(params, QlifHyper::default()).unwrap(), x)
}

fn lif_instance(seed: u64, shape: (usize, usize, usize), n: usize) -> (LifLayer, Sequence) {
    let mut r = rng(seed);
    let (b, t, i) = shape;
    let x = uniform(&mut r, &[b, t, i], -2.0, 2.0).into_dimensionality::<Ix3>().unwrap();
    let params = LifLayerParams {
        kernel: uniform(&mut r, &[i, n], -1.0, 1.5).into_dimensionality::<Ix2>().unwrap(),
        bias: uniform(&mut r, &[n], -0.5, 1.5).into_dimensionality::<Ix1>().unwrap(),
        tau_raw: uniform(&mut r, &[n], 0.5, 4.0).into_dimensionality::<Ix1>().unwrap(),
    };
    (LifLayer::new(params, LifHyper::default()).unwrap(), x)
}

fn max_abs_diff(a: &Sequence, b: &Sequence) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn qlif_batched_matches_sequential() {
    let mut fired = 0.0;
    let mut total = 0;
    for (shape, n) in [((2, 5, 3), 3), ((4, 12, 8), 8)] {
        for seed in 0..20 {
            let (layer, x) = qlif_instance(seed, shape, n);
            let p = layer.params_ref();
            let h = layer.hyper();
            let (expected, _) = qlif_oracle(
                &x,
                &p.kernel.clone().into_dyn(),
                &p.theta.clone().into_dyn(),
                &p.tau_raw.clone().into_dyn(),
                h.threshold,
                h.t1,
                h.threshold,
                Output::Hard,
                None,
            );
            let (spikes, cache) = layer.forward(&x).unwrap();
            assert!(max_abs_diff(&spikes, &expected) <= 1e-12, "seed {seed}");
            fired += spikes.sum();
            total += spikes.len();

            // carried state agrees too, not just the thresholded output
            let (relaxed_out, _) = qlif_oracle(
                &x,
                &p.kernel.clone().into_dyn(),
                &p.theta.clone().into_dyn(),
                &p.tau_raw.clone().into_dyn(),
                h.threshold,
                h.t1,
                h.threshold,
                Output::Relaxed,
                None,
            );
            let u = cache.surrogate_arg();
            let from_cache = u.mapv(common::atan_surrogate);
            assert!(max_abs_diff(&from_cache, &relaxed_out) <= 1e-12, "seed {seed}");
        }
    }
    let rate = fired / total as f64;
    assert!(rate > 0.05 && rate < 0.95, "spike rate {rate}");
}

#[test]
fn lif_batched_matches_sequential() {
    let mut fired = 0.0;
    let mut total = 0;
    for (shape, n) in [((2, 5, 3), 3), ((4, 12, 8), 8)] {
        for seed in 0..20 {
            let (layer, x) = lif_instance(seed, shape, n);
            let p = layer.params_ref();
            let (expected, _) = lif_oracle(
                &x,
                &p.kernel.clone().into_dyn(),
                &p.bias.clone().into_dyn(),
                &p.tau_raw.clone().into_dyn(),
                layer.hyper().threshold,
                Output::Hard,
                None,
            );
            let (spikes, _) = layer.forward(&x).unwrap();
            assert!(max_abs_diff(&spikes, &expected) <= 1e-12, "seed {seed}");
            fired += spikes.sum();
            total += spikes.len();
        }
    }
    let rate = fired / total as f64;
    assert!(rate > 0.05 && rate < 0.95, "spike rate {rate}");
}

#[test]
fn every_spike_resets_the_carried_state() {
    for seed in 0..10 {
        let (layer, x) = qlif_instance(seed, (4, 12, 8), 8);
        let (spikes, cache) = layer.forward(&x).unwrap();
        let (b_n, t_n, n) = spikes.dim();
        for b in 0..b_n {
            for t in 0..t_n - 1 {
                for j in 0..n {
                    if spikes[[b, t, j]] == 1.0 {
                        assert!(cache.alpha_new()[[b, t, j]] >= 0.75);
                        assert_eq!(cache.alpha_prev()[[b, t + 1, j]], 0.0);
                    } else {
                        assert_eq!(cache.alpha_prev()[[b, t + 1, j]], cache.alpha_new()[[b, t, j]]);
                    }
                }
            }
        }

        let (layer, x) = lif_instance(seed, (4, 12, 8), 8);
        let (spikes, cache) = layer.forward(&x).unwrap();
        for b in 0..b_n {
            for t in 0..t_n - 1 {
                for j in 0..n {
                    let next = cache.membrane_prev()[[b, t + 1, j]];
                    if spikes[[b, t, j]] == 1.0 {
                        assert_eq!(next, 0.0);
                    } else {
                        assert_eq!(next, cache.membrane()[[b, t, j]]);
                    }
                }
            }
        }
    }
}

/// Drives one neuron through random excitations and decays with the public
/// step functions; the probability never leaves `[0, 1]`.
#[test]
fn random_qlif_walk_stays_a_probability() {
    let mut r = rng(2024);
    let mut alpha = 0.0;
    for step in 0..100_000 {
        let phi = encode_state(alpha).unwrap();
        let drive: f64 = r.random_range(-3.0..3.0);
        let theta_in = if drive > 0.0 {
            r.random_range(0.0..2.0) * drive
        } else {
            decay_angle(alpha, r.random_range(0.001..20.0), 10.0).unwrap()
        };
        let next = decode_angle(phi + theta_in);
        assert!((0.0..=1.0).contains(&next), "step {step}: {next}");
        alpha = if next >= 0.75 { 0.0 } else { next };
    }
}

#[test]
fn lif_zero_input_decay_is_geometric() {
    for tau in [0.5, 1.0, 5.0, 20.0] {
        let beta = (-1.0_f64 / tau).exp();
        let u0 = 0.6;
        let mut u = u0;
        let mut reference = u0;
        for t in 1..=100 {
            u = lif_step(u, 0.0, tau);
            reference *= beta;
            assert_eq!(u, reference, "tau {tau}, step {t}");
            assert!((u - u0 * beta.powi(t)).abs() <= 1e-12 * u0);
        }
    }
}

#[test]
fn qlif_decays_without_positive_drive() {
    // negative drive closes the gate, so alpha follows the T1 relaxation
    let params = QlifLayerParams {
        kernel: ndarray::array![[1.0]],
        theta: Array1::from_elem(1, 1.0),
        tau_raw: Array1::from_elem(1, 5.0),
    };
    let layer = QlifLayer::new(params, QlifHyper::default()).unwrap();
    let mut x = Sequence::from_elem((1, 6, 1), -1.0);
    x[[0, 0, 0]] = 0.8;
    let (_, cache) = layer.forward(&x).unwrap();
    let alpha = cache.alpha_new();
    let start = (0.4_f64).sin().powi(2);
    assert!((alpha[[0, 0, 0]] - start).abs() < 1e-15);
    for t in 1..6 {
        let prev = alpha[[0, t - 1, 0]];
        assert!(alpha[[0, t, 0]] < prev);
        let phi = 2.0 * prev.sqrt().asin();
        let gamma = -2.0 * (prev * (-0.5_f64).exp()).sqrt().asin();
        assert!((alpha[[0, t, 0]] - ((phi + gamma) / 2.0).sin().powi(2)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn encode_decode_roundtrip(alpha in 0.0f64..=1.0) {
        let back = decode_angle(encode_state(alpha).unwrap());
        prop_assert!((back - alpha).abs() < 1e-12);
    }

    #[test]
    fn update_is_a_probability(phi in -10.0f64..10.0, theta in -10.0f64..10.0) {
        let p = decode_angle(phi + theta);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn out_of_range_probability_is_rejected(alpha in prop_oneof![-5.0f64..-1e-6, 1.000_001f64..5.0]) {
        prop_assert!(encode_state(alpha).is_err());
    }
}
