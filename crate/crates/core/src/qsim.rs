//! Exact single-qubit state-vector simulation.
//!
//! Only the `Rx` rotation is needed to run the QLIF circuit
//! `|0> -> Rx(phi) -> Rx(theta) -> measure`. Shots are drawn from a
//! ChaCha8 stream seeded with the caller's `u64` seed: each shot compares one
//! uniform `f64` in `[0, 1)` against `P(|1>)`, so a given seed yields the same
//! counts on every platform.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState {
    pub amp0: Complex64,
    pub amp1: Complex64,
}

impl Default for QubitState {
    fn default() -> Self {
        QubitState::ground()
    }
}

impl QubitState {
    /// `|0>`
    pub fn ground() -> Self {
        QubitState {
            amp0: Complex64::new(1.0, 0.0),
            amp1: Complex64::new(0.0, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp0.norm_sqr() + self.amp1.norm_sqr()
    }
}

/// Applies `Rx(angle) = cos(angle/2) I - i sin(angle/2) X`.
pub fn apply_rx(state: QubitState, angle: f64) -> QubitState {
    let (s, c) = (0.5 * angle).sin_cos();
    let minus_i_s = Complex64::new(0.0, -s);
    QubitState {
        amp0: state.amp0 * c + state.amp1 * minus_i_s,
        amp1: state.amp0 * minus_i_s + state.amp1 * c,
    }
}

/// Probability of measuring `|1>`.
pub fn measure_p1(state: &QubitState) -> f64 {
    state.amp1.norm_sqr()
}

/// Final state of `Rx(theta) Rx(phi) |0>`.
pub fn qlif_circuit(phi: f64, theta: f64) -> QubitState {
    apply_rx(apply_rx(QubitState::ground(), phi), theta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShotResult {
    pub shots: u64,
    pub ones: u64,
    pub p1_hat: f64,
}

/// Draws `shots` projective measurements of `state`.
pub fn sample_shots(state: &QubitState, shots: u64, seed: u64) -> Result<ShotResult> {
    if shots == 0 {
        return Err(Error::Domain("shot count must be at least 1".into()));
    }
    let p1 = measure_p1(state);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = (0..shots).filter(|_| rng.random::<f64>() < p1).count() as u64;
    Ok(ShotResult {
        shots,
        ones,
        p1_hat: ones as f64 / shots as f64,
    })
}
