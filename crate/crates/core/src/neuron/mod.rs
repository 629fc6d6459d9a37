//! Spiking neuron layers: the quantum (QLIF) update and the classical LIF
//! baseline. Both layers share the same shapes, parameter counts, reset
//! semantics and arctan surrogate gradient, so a model can swap one for the
//! other without touching anything else.

pub mod lif;
pub mod qlif;
pub mod surrogate;

use serde::{Deserialize, Serialize};

pub use lif::{lif_step, LifCache, LifGrads, LifHyper, LifLayer, LifLayerParams};
pub use qlif::{
    decay_angle, decode_angle, encode_state, qlif_update, QlifCache, QlifGrads, QlifHyper,
    QlifLayer, QlifLayerParams,
};
pub use surrogate::{surrogate_grad, surrogate_value};

/// Smallest decay time constant admitted at the point of use.
pub const TAU_MIN: f64 = 1e-3;

/// Initial value of the unconstrained time-constant parameters.
pub const TAU_INIT: f64 = 5.0;

/// Where the surrogate derivative is centred.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateCenter {
    /// `u = value - threshold`: the surrogate peaks at the spike boundary.
    #[default]
    Threshold,
    /// `u = value`: the literal arctan surrogate of the raw state.
    Zero,
}

impl SurrogateCenter {
    pub fn offset(self, threshold: f64) -> f64 {
        match self {
            SurrogateCenter::Threshold => threshold,
            SurrogateCenter::Zero => 0.0,
        }
    }
}

/// Effective time constant and the derivative mask of the clamp.
#[inline]
pub(crate) fn effective_tau(tau_raw: f64) -> (f64, f64) {
    if tau_raw > TAU_MIN {
        (tau_raw, 1.0)
    } else {
        (TAU_MIN, 0.0)
    }
}
