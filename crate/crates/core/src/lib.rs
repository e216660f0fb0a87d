//! Simulation and estimation toolkit for photonic qubit precertification.
//!
//! A polarization qubit is split into a flag/signal photon pair by
//! single-photon down-conversion; detecting the flag heralds the signal
//! without touching its polarization. This crate models that channel,
//! the photon-counting statistics around it, and maximum-likelihood
//! tomography of the resulting processes.
//!
//! The quantum layer ([`quantum`], [`protocol`]) is generic over the real
//! scalar ([`Real`]: `f32` or `f64`). The aliases below fix it to `f64`, which
//! is what the counting and tomography layers use.

pub mod detection;
pub mod error;
pub mod linalg;
pub mod protocol;
pub mod quantum;
pub mod scalar;
pub mod tomography;

pub use error::{Error, Result};
pub use quantum::{
    apply_channel, jozsa_fidelity, make_state, process_fidelity, state_fidelity, Basis, StatePrep,
};
pub use scalar::Real;

pub type QubitState = quantum::Qubit<f64>;
pub type TwoQubitState = quantum::TwoQubit<f64>;
pub type ProcessMatrix = quantum::Chi<f64>;

pub type QubitStateF32 = quantum::Qubit<f32>;
pub type TwoQubitStateF32 = quantum::TwoQubit<f32>;
pub type ProcessMatrixF32 = quantum::Chi<f32>;

pub type Complex64 = num_complex::Complex<f64>;
