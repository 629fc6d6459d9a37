//! Classical leaky integrate-and-fire baseline.
//!
//! The membrane follows `U_new = beta U + (1 - beta) I` with
//! `beta = exp(-1 / tau)` and resets to zero on a spike. The drive carries a
//! per-neuron bias so the layer has exactly as many parameters as the QLIF
//! layer it replaces.

use ndarray::{s, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{effective_tau, surrogate_grad, TAU_INIT};
use crate::layers::{Generation, GradientSet, Parameterized};
use crate::tensor::{check_feature_dim, glorot_uniform, Matrix, Sequence, Tensor, Vector};
use crate::{Error, Result};

/// One membrane update `beta * u_prev + (1 - beta) * i_in`.
#[inline]
pub fn lif_step(u_prev: f64, i_in: f64, tau: f64) -> f64 {
    let beta = (-1.0 / tau).exp();
    beta * u_prev + (1.0 - beta) * i_in
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LifNeuronState {
    pub membrane: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifHyper {
    pub threshold: f64,
}

impl Default for LifHyper {
    fn default() -> Self {
        LifHyper { threshold: 0.75 }
    }
}

impl LifHyper {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::Config(format!(
                "LIF threshold must be finite, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LifLayerParams {
    pub kernel: Matrix,
    pub bias: Vector,
    pub tau_raw: Vector,
}

impl LifLayerParams {
    pub fn init<R: Rng + ?Sized>(rng: &mut R, n_in: usize, n_neurons: usize) -> Self {
        LifLayerParams {
            kernel: glorot_uniform(rng, n_in, n_neurons),
            bias: Vector::zeros(n_neurons),
            tau_raw: Vector::from_elem(n_neurons, TAU_INIT),
        }
    }

    pub fn zeros(n_in: usize, n_neurons: usize) -> Self {
        LifLayerParams {
            kernel: Matrix::zeros((n_in, n_neurons)),
            bias: Vector::zeros(n_neurons),
            tau_raw: Vector::from_elem(n_neurons, TAU_INIT),
        }
    }

    pub fn n_in(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn n_neurons(&self) -> usize {
        self.kernel.ncols()
    }
}

#[derive(Clone, Debug)]
pub struct LifCache {
    inputs: Sequence,
    drive: Array3<f64>,
    u_prev: Array3<f64>,
    u_new: Array3<f64>,
    spikes: Array3<f64>,
    generation: Generation,
}

impl LifCache {
    pub fn membrane(&self) -> &Array3<f64> {
        &self.u_new
    }

    /// Membrane entering each step.
    pub fn membrane_prev(&self) -> &Array3<f64> {
        &self.u_prev
    }
}

#[derive(Clone, Debug)]
pub struct LifGrads {
    pub kernel: Matrix,
    pub bias: Vector,
    pub tau_raw: Vector,
}

impl GradientSet for LifGrads {
    fn into_tensors(self) -> Vec<Tensor> {
        vec![
            self.kernel.into_dyn(),
            self.bias.into_dyn(),
            self.tau_raw.into_dyn(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct LifLayer {
    params: LifLayerParams,
    hyper: LifHyper,
    generation: Generation,
}

impl LifLayer {
    pub fn new(params: LifLayerParams, hyper: LifHyper) -> Result<Self> {
        let n = params.n_neurons();
        if params.bias.len() != n || params.tau_raw.len() != n {
            return Err(Error::Shape(format!(
                "LIF parameters: kernel has {n} neurons but bias/tau have {}/{}",
                params.bias.len(),
                params.tau_raw.len()
            )));
        }
        hyper.validate()?;
        Ok(LifLayer {
            params,
            hyper,
            generation: Generation::default(),
        })
    }

    pub fn params_ref(&self) -> &LifLayerParams {
        &self.params
    }

    pub fn hyper(&self) -> &LifHyper {
        &self.hyper
    }

    pub fn n_neurons(&self) -> usize {
        self.params.n_neurons()
    }

    pub fn forward(&self, inputs: &Sequence) -> Result<(Sequence, LifCache)> {
        let (batch, steps, n_in) = inputs.dim();
        check_feature_dim("LIF layer", n_in, self.params.n_in())?;
        let n = self.n_neurons();
        let threshold = self.hyper.threshold;
        let beta = self.params.tau_raw.mapv(|t| (-1.0 / effective_tau(t).0).exp());

        let mut drive = Array3::zeros((batch, steps, n));
        let mut u_prev = Array3::zeros((batch, steps, n));
        let mut u_new = Array3::zeros((batch, steps, n));
        let mut spikes = Array3::zeros((batch, steps, n));
        let mut membrane = Array2::<f64>::zeros((batch, n));

        for t in 0..steps {
            let i_t = inputs.slice(s![.., t, ..]).dot(&self.params.kernel) + &self.params.bias;
            u_prev.slice_mut(s![.., t, ..]).assign(&membrane);
            Zip::from(u_new.slice_mut(s![.., t, ..]))
                .and(spikes.slice_mut(s![.., t, ..]))
                .and(&mut membrane)
                .and(&i_t)
                .and_broadcast(&beta)
                .for_each(|new, spike, carried, &i, &beta| {
                    let u = beta * *carried + (1.0 - beta) * i;
                    *new = u;
                    if u >= threshold {
                        *spike = 1.0;
                        *carried = 0.0;
                    } else {
                        *carried = u;
                    }
                });
            drive.slice_mut(s![.., t, ..]).assign(&i_t);
        }

        let cache = LifCache {
            inputs: inputs.clone(),
            drive,
            u_prev,
            u_new,
            spikes: spikes.clone(),
            generation: self.generation,
        };
        Ok((spikes, cache))
    }

    pub fn backward(&self, cache: LifCache, grad_out: &Sequence) -> Result<(Sequence, LifGrads)> {
        self.generation.check(cache.generation, "LIF layer")?;
        let (batch, steps, n_in) = cache.inputs.dim();
        let n = self.n_neurons();
        if n_in != self.params.n_in() || cache.spikes.dim() != (batch, steps, n) {
            return Err(Error::StaleCache(
                "LIF cache was produced by a layer of a different shape".into(),
            ));
        }
        if grad_out.dim() != (batch, steps, n) {
            return Err(Error::Shape(format!(
                "LIF backward: grad_out {:?} does not match spikes {:?}",
                grad_out.dim(),
                (batch, steps, n)
            )));
        }
        let threshold = self.hyper.threshold;
        let (tau, tau_mask): (Vec<f64>, Vec<f64>) =
            self.params.tau_raw.iter().map(|&t| effective_tau(t)).unzip();
        let beta: Vec<f64> = tau.iter().map(|t| (-1.0 / t).exp()).collect();

        let mut grad_input = Array3::zeros((batch, steps, n_in));
        let mut grad_kernel = Matrix::zeros((n_in, n));
        let mut grad_bias = Vector::zeros(n);
        let mut grad_tau_elem = Array2::<f64>::zeros((batch, n));
        let mut carry = Array2::<f64>::zeros((batch, n));
        let mut grad_drive = Array2::<f64>::zeros((batch, n));

        for t in (0..steps).rev() {
            let grad_out_t = grad_out.slice(s![.., t, ..]);
            let u_new_t = cache.u_new.slice(s![.., t, ..]);
            let u_prev_t = cache.u_prev.slice(s![.., t, ..]);
            let drive_t = cache.drive.slice(s![.., t, ..]);
            let spikes_t = cache.spikes.slice(s![.., t, ..]);
            for b in 0..batch {
                for j in 0..n {
                    let d_new = grad_out_t[[b, j]] * surrogate_grad(u_new_t[[b, j]] - threshold)
                        + carry[[b, j]] * (1.0 - spikes_t[[b, j]]);
                    let beta_j = beta[j];
                    grad_drive[[b, j]] = d_new * (1.0 - beta_j);
                    let d_beta = d_new * (u_prev_t[[b, j]] - drive_t[[b, j]]);
                    grad_tau_elem[[b, j]] += d_beta * beta_j / (tau[j] * tau[j]) * tau_mask[j];
                    carry[[b, j]] = d_new * beta_j;
                }
            }
            let x_t = cache.inputs.slice(s![.., t, ..]);
            grad_kernel += &x_t.t().dot(&grad_drive);
            grad_bias += &grad_drive.sum_axis(Axis(0));
            grad_input
                .slice_mut(s![.., t, ..])
                .assign(&grad_drive.dot(&self.params.kernel.t()));
        }

        let grads = LifGrads {
            kernel: grad_kernel,
            bias: grad_bias,
            tau_raw: grad_tau_elem.sum_axis(Axis(0)),
        };
        Ok((grad_input, grads))
    }
}

impl Parameterized for LifLayer {
    fn params(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        vec![
            ("kernel", self.params.kernel.view().into_dyn()),
            ("bias", self.params.bias.view().into_dyn()),
            ("tau_raw", self.params.tau_raw.view().into_dyn()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        self.generation.bump();
        vec![
            ("kernel", self.params.kernel.view_mut().into_dyn()),
            ("bias", self.params.bias.view_mut().into_dyn()),
            ("tau_raw", self.params.tau_raw.view_mut().into_dyn()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        // zero drive decays geometrically
        let beta = (-1.0f64 / 3.0).exp();
        let mut u = 2.0;
        for t in 1..=10 {
            u = lif_step(u, 0.0, 3.0);
            assert_eq!(u, {
                let mut expect = 2.0;
                for _ in 0..t {
                    expect *= beta;
                }
                expect
            });
        }
        assert!((lif_step(0.4, 0.4, 7.0) - 0.4).abs() < 1e-15);
        assert!(((-1.0f64).exp() - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn zero_parameters_never_spike() {
        let layer = LifLayer::new(LifLayerParams::zeros(3, 4), LifHyper::default()).unwrap();
        let x = Sequence::from_elem((2, 5, 3), 3.0);
        let (spikes, _) = layer.forward(&x).unwrap();
        assert!(spikes.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn constant_drive_first_spike_matches_recursion() {
        let mut params = LifLayerParams::zeros(1, 1);
        params.kernel[[0, 0]] = 1.0;
        params.tau_raw[0] = 4.0;
        let layer = LifLayer::new(params, LifHyper::default()).unwrap();
        let x = Sequence::from_elem((1, 12, 1), 1.0);
        let (spikes, cache) = layer.forward(&x).unwrap();

        let mut u = 0.0;
        let mut first = None;
        for t in 0..12 {
            u = lif_step(u, 1.0, 4.0);
            if u >= 0.75 {
                first = Some(t);
                break;
            }
        }
        let first = first.expect("membrane reaches threshold");
        for t in 0..first {
            assert_eq!(spikes[[0, t, 0]], 0.0);
        }
        assert_eq!(spikes[[0, first, 0]], 1.0);
        assert_eq!(cache.membrane_prev()[[0, first + 1, 0]], 0.0);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut r = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let layer = LifLayer::new(LifLayerParams::init(&mut r, 3, 4), LifHyper::default()).unwrap();
        let x = Sequence::from_shape_simple_fn((2, 5, 3), || r.random_range(-2.0..2.0));
        let (spikes, cache) = layer.forward(&x).unwrap();
        let (gx, g) = layer.backward(cache, &Sequence::zeros(spikes.raw_dim())).unwrap();
        assert!(gx
            .iter()
            .chain(g.kernel.iter())
            .chain(g.bias.iter())
            .chain(g.tau_raw.iter())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn same_count_as_qlif() {
        let lif = LifLayer::new(LifLayerParams::zeros(48, 48), LifHyper::default()).unwrap();
        assert_eq!(lif.param_count(), 2_400);
    }
}
