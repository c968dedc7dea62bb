//! Analysis toolkit for linear quantum systems described by their
//! scattering, coupling and Hamiltonian matrices: realizations, transfer
//! matrices, back-action-evading (BAE) certificates, quantum non-demolition
//! (QND) checks, coherent feedback reduction and stochastic simulation.

pub mod algebra;
pub mod bae;
pub mod cli;
pub mod error;
pub mod feedback;
pub mod kalman;
pub mod model;
pub mod qnd;
pub mod sampling;
pub mod simulate;
pub mod transfer;

pub use error::{Error, Result};
