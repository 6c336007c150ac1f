//! Simulation toolkit for QAOA on cat qubits encoded in two-photon driven
//! Kerr nonlinear resonators.

pub mod bosonic_qaoa;
pub mod channel;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod knr_gates;
pub mod linalg;
pub mod optim;
pub mod qaoa;
pub mod qubit_channel_sim;
pub mod tomography;

pub use error::{Error, Result};
