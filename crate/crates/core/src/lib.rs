//! Lattice free-field simulator comparing vacuum-subtracted entanglement
//! entropies of spatial regions with the entanglement of localized
//! particles.

pub mod entangle;
pub mod excitations;
pub mod experiment;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod qmref;
pub mod replica;

pub use fock::{C64, FockBasis, ModeLabel, StateVector, Statistics};
