//! Simulator for a quantum battery made of an N-spin chain with
//! nearest-neighbour hopping, charged through a lossy cavity either by a
//! coherent drive or by a thermal bath.
//!
//! The crate is organized bottom-up:
//!
//! - [`hilbert`]: tensor products, embeddings and partial traces on the
//!   cavity ⊗ spins space.
//! - [`model`]: Hamiltonians, dissipators, disorder and the initial state.
//! - [`lindblad`]: RK4 integration of the master equation and steady states.
//! - [`observables`]: energy, ergotropy, efficiency, power, charging time and
//!   order parameters.
//! - [`spectrum`]: exact diagonalization of the battery and crossing scans.
//! - [`experiments`]: charging runs, parameter sweeps and disorder ensembles.
//! - [`cli`]: config-file driven batch runs with CSV and JSON output.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod linalg;
pub mod lindblad;
pub mod model;
pub mod observables;
pub mod spectrum;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
