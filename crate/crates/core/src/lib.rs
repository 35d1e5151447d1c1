//! Quantum imaginary time evolution (QITE) on a dense statevector, with a
//! distributed PPO agent that reorders the local Hamiltonian terms inside
//! each Trotter step.
//!
//! Qubit 0 is the most significant bit of a basis-state index everywhere in
//! this crate. Human-facing labels (`X1`, `Z1Z2`, ...) are 1-based.

pub mod dppo;
pub mod env;
pub mod error;
pub mod linalg;
pub mod models;
pub mod nn;
pub mod pauli;
pub mod qite;
pub mod state;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use pauli::{Hamiltonian, LocalTerm, Pauli, PauliString};
pub use state::Statevector;

/// Largest register handled by the dense eigensolver paths.
pub const MAX_DENSE_QUBITS: usize = 12;
