//! The three-qubit model: two target qubits A and B, both exchange-coupled
//! to an ancilla X that is repeatedly measured, plus an optional direct
//! A–B exchange term.

use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, ComplexVector, LinalgError, C64, ZERO};

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("invalid model parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Physical constants of the Hamiltonian, in raw energy units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Bohr frequency shared by all three qubits.
    pub omega: f64,
    /// A–X and B–X exchange coupling.
    pub epsilon: f64,
    /// Magnitude of the direct A–B exchange coupling.
    pub eta: f64,
    /// Phase of the A–B coupling.
    pub phi_eta: f64,
}

impl ModelParams {
    pub fn new(omega: f64, epsilon: f64, eta: f64, phi_eta: f64) -> Result<Self, ModelError> {
        let p = Self {
            omega,
            epsilon,
            eta,
            phi_eta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let check_finite = |name, value: f64| {
            if value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                })
            }
        };
        check_finite("omega", self.omega)?;
        check_finite("epsilon", self.epsilon)?;
        check_finite("eta", self.eta)?;
        check_finite("phi_eta", self.phi_eta)?;
        if self.epsilon < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
                reason: "must be non-negative",
            });
        }
        if self.eta < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "eta",
                value: self.eta,
                reason: "must be non-negative",
            });
        }
        Ok(())
    }

    /// Parameters given in units of ε (so ε = 1).
    pub fn in_epsilon_units(omega_over_eps: f64, eta_over_eps: f64, phi_eta: f64) -> Result<Self, ModelError> {
        Self::new(omega_over_eps, 1.0, eta_over_eps, phi_eta)
    }
}

/// The measured ancilla state cos θ|↑⟩ + e^{−iφ} sin θ|↓⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AncillaState {
    pub theta: f64,
    pub phi_x: f64,
}

impl AncillaState {
    pub fn new(theta: f64, phi_x: f64) -> Result<Self, ModelError> {
        if !theta.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "theta",
                value: theta,
                reason: "must be finite",
            });
        }
        if !phi_x.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "phi_x",
                value: phi_x,
                reason: "must be finite",
            });
        }
        Ok(Self { theta, phi_x })
    }
}

/// Row order of the 8×8 Hamiltonian and the 4-dimensional A⊗B order.
///
/// Composite rows: ↑↑↑ₓ, ↑↓↑ₓ, ↓↑↑ₓ, ↑↑↓ₓ, ↑↓↓ₓ, ↓↑↓ₓ, ↓↓↑ₓ, ↓↓↓ₓ.
/// AB order: ↑↑, ↑↓, ↓↑, ↓↓. Ancilla order: ↑, ↓.
pub struct BasisMap;

impl BasisMap {
    pub const COMPOSITE_LABELS: [&'static str; 8] = [
        "uu,Xu", "ud,Xu", "du,Xu", "uu,Xd", "ud,Xd", "du,Xd", "dd,Xu", "dd,Xd",
    ];
    pub const AB_LABELS: [&'static str; 4] = ["uu", "ud", "du", "dd"];

    // COMPOSITE[ab][x]
    const COMPOSITE: [[usize; 2]; 4] = [[0, 3], [1, 4], [2, 5], [6, 7]];

    /// Matrix row of |ab⟩|x⟩.
    pub const fn index(ab: usize, x: usize) -> usize {
        Self::COMPOSITE[ab][x]
    }

    /// Inverse of [`BasisMap::index`].
    pub fn labels_of(row: usize) -> (usize, usize) {
        for ab in 0..4 {
            for x in 0..2 {
                if Self::COMPOSITE[ab][x] == row {
                    return (ab, x);
                }
            }
        }
        panic!("composite row {row} out of range");
    }

    /// Permutation taking tensor order (AB ⊗ X, row = 2·ab + x) to composite
    /// rows: `perm[2·ab + x] = index(ab, x)`.
    pub fn tensor_to_composite() -> [usize; 8] {
        let mut perm = [0; 8];
        for ab in 0..4 {
            for x in 0..2 {
                perm[2 * ab + x] = Self::index(ab, x);
            }
        }
        perm
    }
}

/// The 8×8 Hamiltonian in the composite row order of [`BasisMap`].
///
/// Diagonal (3ω, 2ω, 2ω, 2ω, ω, ω, ω, 0); η e^{iφ} couples ↑↓ to ↓↑ within
/// each ancilla sector and ε couples each single-excitation AB state to the
/// state with the excitation moved onto the ancilla.
pub fn build_hamiltonian(p: &ModelParams) -> ComplexMatrix {
    let w = p.omega;
    let diag = [3.0 * w, 2.0 * w, 2.0 * w, 2.0 * w, w, w, w, 0.0];
    let mut h = ComplexMatrix::from_real_diag(&diag);
    let ab = C64::from_polar(p.eta, p.phi_eta);
    let eps = C64::new(p.epsilon, 0.0);
    for (i, j) in [(1, 2), (4, 5)] {
        h[(i, j)] = ab;
        h[(j, i)] = ab.conj();
    }
    for (i, j) in [(1, 3), (2, 3), (4, 6), (5, 6)] {
        h[(i, j)] = eps;
        h[(j, i)] = eps;
    }
    h
}

/// (cos θ, e^{−iφ} sin θ) in the (↑, ↓) order.
pub fn ancilla_vector(a: &AncillaState) -> ComplexVector {
    let v = ComplexVector::new(vec![
        C64::new(a.theta.cos(), 0.0),
        C64::from_polar(a.theta.sin(), -a.phi_x),
    ]);
    debug_assert!((v.norm() - 1.0).abs() < linalg::tol::STATE_NORM);
    v
}

/// Sandwiches a full 8×8 operator between ⟨χ| and |χ⟩ on the ancilla.
pub fn project_onto_ancilla(u: &ComplexMatrix, chi: &ComplexVector) -> ComplexMatrix {
    assert_eq!(u.dim(), 8, "full-space operator must be 8×8");
    assert_eq!(chi.dim(), 2, "ancilla state must be a 2-vector");
    ComplexMatrix::from_fn(4, |m, n| {
        let mut acc = ZERO;
        for s in 0..2 {
            for t in 0..2 {
                acc += chi[s].conj() * u[(BasisMap::index(m, s), BasisMap::index(n, t))] * chi[t];
            }
        }
        acc
    })
}

/// V(τ) for an explicit Hamiltonian `h` in composite row order.
pub fn effective_operator_for(h: &ComplexMatrix, a: &AncillaState, tau: f64) -> Result<ComplexMatrix, LinalgError> {
    let u = linalg::unitary_propagator(h, tau)?;
    Ok(project_onto_ancilla(&u, &ancilla_vector(a)))
}

/// V(τ) = ⟨χ| e^{−iHτ} |χ⟩, the non-unitary map applied to AB per
/// successful measurement of the ancilla in |χ⟩.
pub fn effective_operator(p: &ModelParams, a: &AncillaState, tau: f64) -> Result<ComplexMatrix, ModelError> {
    p.validate()?;
    Ok(effective_operator_for(&build_hamiltonian(p), a, tau)?)
}

/// AB permutation exchanging the roles of A and B (↑↓ ⟷ ↓↑).
pub const SWAP_AB: [usize; 4] = [0, 2, 1, 3];
