//! Quantum leaky integrate-and-fire (QLIF) and classical LIF recurrent
//! forecasters.
//!
//! The crate is organised bottom-up:
//!
//! * [`neuron`] holds the closed-form QLIF update and the classical LIF
//!   baseline, both as batched recurrent layers with surrogate-gradient
//!   backward passes.
//! * [`qsim`] is an exact single-qubit state-vector simulator used to verify
//!   the analytic QLIF update against the gate-level circuit.
//! * [`layers`] contains the non-spiking layers and the Adam optimizer.
//! * [`model`] assembles the seven-layer network and trains it.
//! * [`data`] and [`metrics`] cover dataset preparation and evaluation.
//! * [`runner`] implements the experiment commands exposed by the CLI.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod literature;
pub mod metrics;
pub mod model;
pub mod neuron;
pub mod qsim;
pub mod runner;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
