//! Quarter-wave resonator shunted by a current-biased Josephson junction.
//!
//! The crate turns circuit parameters into the coupled junction-resonator
//! Hamiltonian, diagonalizes it on a phase grid times Fock basis, and
//! propagates the driven system with an absorbing potential to obtain
//! switching probabilities and detector efficiencies.

pub mod circuit;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod io;
pub mod linalg;
pub mod mean_field;
pub mod spectral;
pub mod units;

pub use error::{Error, Result};
