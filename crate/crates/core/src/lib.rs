//! Piecewise-constant quantum control toolkit.
//!
//! Models control Hamiltonians built from drives, shifts and a drift,
//! simulates noisy evolution, computes filter functions, optimizes pulses
//! through a differentiable cost graph, reconstructs noise spectra and
//! estimates Hamiltonian parameters by maximum likelihood.
//!
//! All frequencies are angular (rad/s) and all times are in seconds.

pub mod control;
pub mod error;
pub mod filter;
pub mod json;
pub mod linalg;
pub mod noise;
pub mod optimizer;
pub mod reconstruction;
pub mod scenarios;
pub mod simulator;
pub mod sysid;

pub use error::{Error, Result};
