//! Simulation and numerical optimization of measurement-assisted
//! linear-optical entangling gates.
//!
//! The crate renders the action of optical mode unitaries on multi-photon
//! Fock states, assembles post-selected Kraus operators from a circuit, an
//! ancilla state, and a projective measurement, and searches circuit and
//! ancilla parameters that maximize gate fidelity and heralding success
//! probability for the elementary inter-block entangling operations C1-C4.
//!
//! Module map:
//!
//! - [`fock`]: occupation vectors, mode assignments, basis enumeration.
//! - [`transfer`]: mode unitaries and the induced many-photon transfer
//!   operator, rendered on restricted bases.
//! - [`oracle`]: brute-force creation-operator expansion used to validate
//!   `transfer` at small scale.
//! - [`kraus`]: post-selected Kraus operators, fidelity and success
//!   measures, and gate-table embedding on larger registers.
//! - [`gates`]: the C1-C4 gate tables, single-photon block encoding,
//!   CNOT schedules, and success-probability formulas.
//! - [`optim`]: unitary/ancilla parametrization, merit function, and
//!   restart-based local optimization with resource sweeps.
//! - [`cli`]: configuration, run records, verification, and CSV emission
//!   backing the `photonforge` binary.

pub mod cli;
pub mod error;
pub mod fock;
pub mod gates;
pub mod kraus;
pub mod linalg;
pub mod optim;
pub mod oracle;
pub mod transfer;

pub use error::{Error, Result};
