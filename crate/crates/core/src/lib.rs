//! Coherence budgets and noise-parameter estimation for tunable
//! capacitively shunted flux qubits.
//!
//! The crate is organised bottom-up:
//!
//! - [`qubit_model`]: two-level Hamiltonian, symmetry point and flux sensitivities.
//! - [`noise_psd`]: spectral densities, attenuation chains and Z/X correlation algebra.
//! - [`resonator`]: rf-SQUID terminated readout resonator and qubit coupling.
//! - [`decoherence`]: relaxation channels, filter-function dephasing, extra dephasing channels.
//! - [`annealing_noise`]: flux noise mapped onto the annealing parameters.
//! - [`estimation`]: asymmetry and flux-noise fits.
//! - [`mc_oracle`]: time-domain Monte-Carlo check of the dephasing integrals.
//! - [`config`] and [`cli`]: the batch front end.
//!
//! Internal units: angular frequency in rad/s, flux in units of the flux
//! quantum, everything else SI. Conversions happen at the config boundary.

pub mod annealing_noise;
pub mod cli;
pub mod config;
pub mod constants;
pub mod decoherence;
pub mod error;
pub mod estimation;
pub mod mc_oracle;
pub mod noise_psd;
pub mod numerics;
pub mod qubit_model;
pub mod resonator;

pub use error::{Error, Result};
