//! Repeated-measurement purification of two qubits A and B coupled to a
//! measured ancilla X.
//!
//! The pipeline builds the 8×8 Hamiltonian ([`model`]), projects the
//! propagator onto the measured ancilla state to get the 4×4 effective
//! operator V(τ), decomposes it biorthogonally ([`analysis`]) and reports
//! the witnesses Υ, Λ and Σ, point by point or over grids ([`sweep`]).
//! [`perturbation`] and [`oracle`] hold independent cross-checks.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod emit;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod perturbation;
pub mod sweep;

pub use analysis::{spectral_decompose, witnesses, DensityMatrix, SpectralData, WitnessTriple};
pub use linalg::{ComplexMatrix, ComplexVector, C64};
pub use model::{build_hamiltonian, effective_operator, AncillaState, ModelParams};
pub use sweep::{run_sweep, Axis, GridSpec, SweepGrid};
