//! Quantum leaky integrate-and-fire neuron.
//!
//! Each neuron keeps its excitation as the probability `alpha` of measuring a
//! single qubit in `|1>`. One timestep prepares `Rx(phi)|0>` with
//! `phi = 2 asin(sqrt(alpha))`, applies `Rx(theta_input)` and reads back
//! `alpha_new = sin^2((phi + theta_input) / 2)`. Because every gate angle is
//! computed from classical parameters, the circuit has the closed form above
//! and the layer is differentiated analytically; [`crate::qsim`] checks the
//! closed form against the gate-level simulation.
//!
//! The layer gates on positive drive: a neuron whose projected input
//! `a = x . kernel` is positive integrates `theta * a`, otherwise it relaxes
//! through the T1 decay angle. The spike is a hard threshold on `alpha_new`;
//! the backward pass substitutes the arctan surrogate derivative and holds
//! the gate and reset branch fixed.

use ndarray::{s, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{effective_tau, surrogate_grad, SurrogateCenter, TAU_INIT};
use crate::layers::{Generation, GradientSet, Parameterized};
use crate::tensor::{check_feature_dim, glorot_uniform, uniform_vector, Matrix, Sequence, Tensor, Vector};
use crate::{Error, Result};

/// Roundoff allowance on probabilities before they are treated as invalid.
const PROB_TOLERANCE: f64 = 1e-9;

fn checked_probability(alpha: f64) -> Result<f64> {
    if !(-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE).contains(&alpha) {
        return Err(Error::Domain(format!(
            "excitation probability {alpha} outside [0, 1]"
        )));
    }
    Ok(alpha.clamp(0.0, 1.0))
}

/// Rotation angle `phi = 2 asin(sqrt(alpha))` encoding an excitation
/// probability, in `[0, pi]`.
pub fn encode_state(alpha: f64) -> Result<f64> {
    Ok(encode_unchecked(checked_probability(alpha)?))
}

#[inline]
fn encode_unchecked(alpha: f64) -> f64 {
    2.0 * alpha.sqrt().asin()
}

/// Probability of `|1>` after `Rx(phi)|0>`: `sin^2(phi / 2)`.
#[inline]
pub fn decode_angle(phi: f64) -> f64 {
    let s = (0.5 * phi).sin();
    s * s
}

/// Excitation after the depth-2 circuit `Rx(theta_input) Rx(phi) |0>`.
#[inline]
pub fn qlif_update(phi: f64, theta_input: f64) -> f64 {
    decode_angle(phi + theta_input)
}

/// T1 relaxation angle `-2 asin(sqrt(alpha * exp(-tau / t1)))`, in `[-pi, 0]`.
pub fn decay_angle(alpha: f64, tau: f64, t1: f64) -> Result<f64> {
    let alpha = checked_probability(alpha)?;
    // written so NaN fails too
    let valid = tau >= 0.0 && t1 > 0.0;
    if !valid {
        return Err(Error::Domain(format!(
            "decay needs tau >= 0 and t1 > 0, got tau = {tau}, t1 = {t1}"
        )));
    }
    Ok(decay_unchecked(alpha, tau, t1))
}

#[inline]
fn decay_unchecked(alpha: f64, tau: f64, t1: f64) -> f64 {
    -2.0 * (alpha * (-tau / t1).exp()).sqrt().asin()
}

/// Per-neuron recurrent state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QlifNeuronState {
    pub alpha: f64,
    pub prev_spike: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlifHyper {
    pub threshold: f64,
    pub t1: f64,
    pub surrogate_center: SurrogateCenter,
}

impl Default for QlifHyper {
    fn default() -> Self {
        QlifHyper {
            threshold: 0.75,
            t1: 10.0,
            surrogate_center: SurrogateCenter::Threshold,
        }
    }
}

impl QlifHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "QLIF threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.t1 > 0.0 && self.t1.is_finite()) {
            return Err(Error::Config(format!("T1 must be positive, got {}", self.t1)));
        }
        Ok(())
    }
}

/// Trainable parameters: `kernel` is `[n_in, n_neurons]`, `theta` and
/// `tau_raw` are per neuron.
#[derive(Clone, Debug, PartialEq)]
pub struct QlifLayerParams {
    pub kernel: Matrix,
    pub theta: Vector,
    pub tau_raw: Vector,
}

impl QlifLayerParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, n_in: usize, n_neurons: usize) -> Self {
        QlifLayerParams {
            kernel: glorot_uniform(rng, n_in, n_neurons),
            theta: uniform_vector(rng, n_neurons, 0.1, 1.0),
            tau_raw: Vector::from_elem(n_neurons, TAU_INIT),
        }
    }

    pub fn zeros(n_in: usize, n_neurons: usize) -> Self {
        QlifLayerParams {
            kernel: Matrix::zeros((n_in, n_neurons)),
            theta: Vector::zeros(n_neurons),
            tau_raw: Vector::from_elem(n_neurons, TAU_INIT),
        }
    }

    pub fn n_in(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn n_neurons(&self) -> usize {
        self.kernel.ncols()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_neurons();
        if self.theta.len() != n || self.tau_raw.len() != n {
            return Err(Error::Shape(format!(
                "QLIF parameters: kernel has {n} neurons but theta/tau have {}/{}",
                self.theta.len(),
                self.tau_raw.len()
            )));
        }
        Ok(())
    }
}

/// Values retained by the forward pass, all `[batch, time, n_neurons]`.
#[derive(Clone, Debug)]
pub struct QlifCache {
    inputs: Sequence,
    drive: Array3<f64>,
    alpha_prev: Array3<f64>,
    /// `phi + theta_input` of each step.
    angle: Array3<f64>,
    alpha_new: Array3<f64>,
    /// Surrogate argument `alpha_new - center`.
    u: Array3<f64>,
    spikes: Array3<f64>,
    generation: Generation,
}

impl QlifCache {
    pub fn alpha_new(&self) -> &Array3<f64> {
        &self.alpha_new
    }

    /// Excitation entering each step.
    pub fn alpha_prev(&self) -> &Array3<f64> {
        &self.alpha_prev
    }

    pub fn surrogate_arg(&self) -> &Array3<f64> {
        &self.u
    }

    pub fn drive(&self) -> &Array3<f64> {
        &self.drive
    }
}

#[derive(Clone, Debug)]
pub struct QlifGrads {
    pub kernel: Matrix,
    pub theta: Vector,
    pub tau_raw: Vector,
}

impl GradientSet for QlifGrads {
    fn into_tensors(self) -> Vec<Tensor> {
        vec![
            self.kernel.into_dyn(),
            self.theta.into_dyn(),
            self.tau_raw.into_dyn(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct QlifLayer {
    params: QlifLayerParams,
    hyper: QlifHyper,
    generation: Generation,
}

impl QlifLayer {
    pub fn new(params: QlifLayerParams, hyper: QlifHyper) -> Result<Self> {
        params.validate()?;
        hyper.validate()?;
        Ok(QlifLayer {
            params,
            hyper,
            generation: Generation::default(),
        })
    }

    pub fn params_ref(&self) -> &QlifLayerParams {
        &self.params
    }

    pub fn hyper(&self) -> &QlifHyper {
        &self.hyper
    }

    pub fn n_neurons(&self) -> usize {
        self.params.n_neurons()
    }

    /// Runs the recurrence over `[batch, time, n_in]` inputs and returns the
    /// hard spike train `[batch, time, n_neurons]`.
    ///
    /// Every sample starts from `alpha = 0`. Each timestep is one batched
    /// elementwise pass over all samples and neurons.
    pub fn forward(&self, inputs: &Sequence) -> Result<(Sequence, QlifCache)> {
        let (batch, steps, n_in) = inputs.dim();
        check_feature_dim("QLIF layer", n_in, self.params.n_in())?;
        let n = self.n_neurons();
        let QlifHyper {
            threshold, t1, surrogate_center,
        } = self.hyper;
        let center = surrogate_center.offset(threshold);
        let tau = self.params.tau_raw.mapv(|t| effective_tau(t).0);
        let theta = &self.params.theta;

        let mut drive = Array3::zeros((batch, steps, n));
        let mut alpha_prev = Array3::zeros((batch, steps, n));
        let mut angle = Array3::zeros((batch, steps, n));
        let mut alpha_new = Array3::zeros((batch, steps, n));
        let mut spikes = Array3::zeros((batch, steps, n));
        let mut alpha = Array2::<f64>::zeros((batch, n));

        for t in 0..steps {
            let a_t = inputs.slice(s![.., t, ..]).dot(&self.params.kernel);
            alpha_prev.slice_mut(s![.., t, ..]).assign(&alpha);

            Zip::from(angle.slice_mut(s![.., t, ..]))
                .and(&alpha)
                .and(&a_t)
                .and_broadcast(theta)
                .and_broadcast(&tau)
                .for_each(|angle, &alpha, &a, &theta, &tau| {
                    let theta_input = if a > 0.0 {
                        theta * a
                    } else {
                        decay_unchecked(alpha, tau, t1)
                    };
                    *angle = encode_unchecked(alpha) + theta_input;
                });

            Zip::from(alpha_new.slice_mut(s![.., t, ..]))
                .and(spikes.slice_mut(s![.., t, ..]))
                .and(&mut alpha)
                .and(angle.slice(s![.., t, ..]))
                .for_each(|new, spike, carried, &angle| {
                    let p = decode_angle(angle).clamp(0.0, 1.0);
                    *new = p;
                    if p >= threshold {
                        *spike = 1.0;
                        *carried = 0.0;
                    } else {
                        *carried = p;
                    }
                });

            drive.slice_mut(s![.., t, ..]).assign(&a_t);
        }

        let u = alpha_new.mapv(|p| p - center);
        let cache = QlifCache {
            inputs: inputs.clone(),
            drive,
            alpha_prev,
            angle,
            alpha_new,
            u,
            spikes: spikes.clone(),
            generation: self.generation,
        };
        Ok((spikes, cache))
    }

    /// Backpropagation through time with the straight-through surrogate.
    pub fn backward(&self, cache: QlifCache, grad_out: &Sequence) -> Result<(Sequence, QlifGrads)> {
        self.generation.check(cache.generation, "QLIF layer")?;
        let (batch, steps, n_in) = cache.inputs.dim();
        let n = self.n_neurons();
        if n_in != self.params.n_in() || cache.spikes.dim() != (batch, steps, n) {
            return Err(Error::StaleCache(
                "QLIF cache was produced by a layer of a different shape".into(),
            ));
        }
        if grad_out.dim() != (batch, steps, n) {
            return Err(Error::Shape(format!(
                "QLIF backward: grad_out {:?} does not match spikes {:?}",
                grad_out.dim(),
                (batch, steps, n)
            )));
        }

        let t1 = self.hyper.t1;
        let theta = &self.params.theta;
        let tau_and_mask: Vec<(f64, f64)> = self.params.tau_raw.iter().map(|&t| effective_tau(t)).collect();
        let tau = Vector::from_iter(tau_and_mask.iter().map(|p| p.0));
        let tau_mask = Vector::from_iter(tau_and_mask.iter().map(|p| p.1));

        let mut grad_input = Array3::zeros((batch, steps, n_in));
        let mut grad_kernel = Matrix::zeros((n_in, n));
        let mut grad_theta_elem = Array2::<f64>::zeros((batch, n));
        let mut grad_tau_elem = Array2::<f64>::zeros((batch, n));
        // dL/d(alpha carried into step t + 1)
        let mut carry = Array2::<f64>::zeros((batch, n));
        let mut grad_drive = Array2::<f64>::zeros((batch, n));

        for t in (0..steps).rev() {
            let grad_out_t = grad_out.slice(s![.., t, ..]);
            let u_t = cache.u.slice(s![.., t, ..]);
            let spikes_t = cache.spikes.slice(s![.., t, ..]);
            let angle_t = cache.angle.slice(s![.., t, ..]);
            let alpha_t = cache.alpha_prev.slice(s![.., t, ..]);
            let drive_t = cache.drive.slice(s![.., t, ..]);
            for b in 0..batch {
                for j in 0..n {
                    let spike = spikes_t[[b, j]];
                    let d_new = grad_out_t[[b, j]] * surrogate_grad(u_t[[b, j]])
                        + carry[[b, j]] * (1.0 - spike);
                    let d_angle = 0.5 * d_new * angle_t[[b, j]].sin();
                    let alpha = alpha_t[[b, j]];
                    let a = drive_t[[b, j]];
                    let d_alpha;
                    if a > 0.0 {
                        grad_theta_elem[[b, j]] += d_angle * a;
                        grad_drive[[b, j]] = d_angle * theta[j];
                        d_alpha = if alpha > 0.0 {
                            d_angle / (alpha * (1.0 - alpha)).sqrt()
                        } else {
                            0.0
                        };
                    } else {
                        grad_drive[[b, j]] = 0.0;
                        let k = (-tau[j] / t1).exp();
                        let s = alpha * k;
                        if s > 0.0 && s < 1.0 {
                            grad_tau_elem[[b, j]] += d_angle * (s / (1.0 - s)).sqrt() / t1 * tau_mask[j];
                        }
                        d_alpha = if alpha > 0.0 {
                            d_angle / alpha.sqrt()
                                * (1.0 / (1.0 - alpha).sqrt() - k.sqrt() / (1.0 - s).sqrt())
                        } else {
                            0.0
                        };
                    }
                    carry[[b, j]] = d_alpha;
                }
            }

            let x_t = cache.inputs.slice(s![.., t, ..]);
            grad_kernel += &x_t.t().dot(&grad_drive);
            grad_input
                .slice_mut(s![.., t, ..])
                .assign(&grad_drive.dot(&self.params.kernel.t()));
        }

        let grads = QlifGrads {
            kernel: grad_kernel,
            theta: grad_theta_elem.sum_axis(Axis(0)),
            tau_raw: grad_tau_elem.sum_axis(Axis(0)),
        };
        Ok((grad_input, grads))
    }
}

impl Parameterized for QlifLayer {
    fn params(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("kernel", self.params.kernel.view().into_dyn()),
            ("theta", self.params.theta.view().into_dyn()),
            ("tau_raw", self.params.tau_raw.view().into_dyn()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        self.generation.bump();
        vec![
            ("kernel", self.params.kernel.view_mut().into_dyn()),
            ("theta", self.params.theta.view_mut().into_dyn()),
            ("tau_raw", self.params.tau_raw.view_mut().into_dyn()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_state(0.0).unwrap(), 0.0);
        assert!((encode_state(0.5).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((encode_state(0.25).unwrap() - 1.047_197_551_196_597_7).abs() < 1e-14);
    }

    #[test]
    fn encode_clamps_roundoff_and_rejects_larger_violations() {
        assert_eq!(encode_state(-5e-10).unwrap(), 0.0);
        assert!((encode_state(1.0 + 5e-10).unwrap() - PI).abs() < 1e-15);
        assert!(matches!(encode_state(-1e-6), Err(Error::Domain(_))));
        assert!(matches!(encode_state(1.01), Err(Error::Domain(_))));
        assert!(encode_state(f64::NAN).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_angle(0.0), 0.0);
        assert!((decode_angle(PI) - 1.0).abs() < 1e-15);
        assert!((decode_angle(0.8) - 0.1516).abs() < 5e-5);
    }

    #[test]
    fn circuit_update_reproduces_simulator_column() {
        let cases = [(0.5, 0.3, 0.1516), (1.2, 0.8, 0.7081), (2.0, 1.5, 0.9682)];
        for (phi, theta, expected) in cases {
            let p = qlif_update(phi, theta);
            assert!((p - expected).abs() < 5e-5, "({phi}, {theta}) -> {p}");
        }
        assert_eq!(qlif_update(0.5, 0.3), (0.4f64).sin().powi(2));
    }

    #[test]
    fn decay_examples() {
        assert_eq!(decay_angle(0.0, 5.0, 10.0).unwrap(), 0.0);
        let g = decay_angle(0.5, 10.0, 10.0).unwrap();
        assert!((g - (-0.886_509_496_034_084_4)).abs() < 1e-12, "{g}");
        // tau -> infinity leaves the state untouched
        let phi = encode_state(1.0).unwrap();
        let g = decay_angle(1.0, 1e6, 10.0).unwrap();
        assert!(g.abs() < 1e-12);
        assert!((qlif_update(phi, g) - 1.0).abs() < 1e-12);
        assert!(decay_angle(1.5, 1.0, 10.0).is_err());
        assert!(decay_angle(0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn decay_composition_limits() {
        for alpha in [0.05, 0.3, 0.6, 0.9] {
            let phi = encode_state(alpha).unwrap();
            let at_zero = qlif_update(phi, decay_angle(alpha, 0.0, 10.0).unwrap());
            assert!(at_zero.abs() < 1e-12);
            let at_inf = qlif_update(phi, decay_angle(alpha, 1e9, 10.0).unwrap());
            assert!((at_inf - alpha).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_kernel_never_spikes() {
        let layer = QlifLayer::new(QlifLayerParams::zeros(3, 4), QlifHyper::default()).unwrap();
        let x = Sequence::zeros((2, 5, 3));
        let (spikes, cache) = layer.forward(&x).unwrap();
        assert!(spikes.iter().all(|&s| s == 0.0));
        assert!(cache.alpha_new().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn full_rotation_spikes_and_resets() {
        let mut params = QlifLayerParams::zeros(1, 1);
        params.kernel[[0, 0]] = 1.0;
        params.theta[0] = PI;
        let layer = QlifLayer::new(params, QlifHyper::default()).unwrap();
        let x = Sequence::from_elem((1, 2, 1), 1.0);
        let (spikes, cache) = layer.forward(&x).unwrap();
        assert!((cache.alpha_new()[[0, 0, 0]] - 1.0).abs() < 1e-15);
        assert_eq!(spikes[[0, 0, 0]], 1.0);
        assert_eq!(cache.alpha_prev()[[0, 1, 0]], 0.0);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let layer = QlifLayer::new(QlifLayerParams::zeros(3, 4), QlifHyper::default()).unwrap();
        assert!(matches!(layer.forward(&Sequence::zeros((1, 2, 5))), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let layer = QlifLayer::new(QlifLayerParams::init(&mut r, 3, 4), QlifHyper::default()).unwrap();
        let x = Sequence::from_shape_simple_fn((2, 5, 3), || r.random_range(-2.0..2.0));
        let (spikes, cache) = layer.forward(&x).unwrap();
        let (gx, g) = layer.backward(cache, &Sequence::zeros(spikes.raw_dim())).unwrap();
        assert!(gx.iter().chain(g.kernel.iter()).chain(g.theta.iter()).chain(g.tau_raw.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn backward_after_update_is_stale() {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        let mut layer = QlifLayer::new(QlifLayerParams::init(&mut r, 2, 2), QlifHyper::default()).unwrap();
        let x = Sequence::from_elem((1, 3, 2), 0.5);
        let (spikes, cache) = layer.forward(&x).unwrap();
        let _ = layer.params_mut();
        assert!(matches!(
            layer.backward(cache, &Sequence::ones(spikes.raw_dim())),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn parameter_count_48_by_48() {
        let layer = QlifLayer::new(QlifLayerParams::zeros(48, 48), QlifHyper::default()).unwrap();
        assert_eq!(layer.param_count(), 2_400);
    }
}
