//! First-order perturbative spectra of the 8×8 Hamiltonian in the weak
//! (η ≪ ε) and strong (ε ≪ η) inner-coupling regimes, checked against
//! exact diagonalization.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt;

use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, ComplexVector, LinalgError, C64};
use crate::model::{build_hamiltonian, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Perturbation H_AB on top of H₀ + H_AXB.
    Weak,
    /// Perturbation H_AXB on top of H₀ + H_AB.
    Strong,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Weak => "weak",
            Regime::Strong => "strong",
        })
    }
}

#[derive(Debug, Clone, Error)]
pub enum PerturbationError {
    #[error("{regime} regime requires {requirement}")]
    InvalidRegime {
        regime: Regime,
        requirement: &'static str,
    },
    #[error("level assignment ambiguous: spacing {spacing:e} < 10 × residual {residual:e}")]
    AssignmentAmbiguous { spacing: f64, residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct Level {
    pub zeroth_order: f64,
    pub first_order: f64,
    pub label: &'static str,
    /// Unperturbed eigenstate in the Hamiltonian's composite row order.
    pub state: ComplexVector,
}

impl Level {
    pub fn predicted(&self) -> f64 {
        self.zeroth_order + self.first_order
    }
}

#[derive(Debug, Clone)]
pub struct PerturbativeSpectrum {
    pub regime: Regime,
    pub levels: Vec<Level>,
}

// composite rows
const UUU: usize = 0;
const UDU: usize = 1;
const DUU: usize = 2;
const UUD: usize = 3;
const UDD: usize = 4;
const DUD: usize = 5;
const DDU: usize = 6;
const DDD: usize = 7;

fn ket(terms: &[(usize, C64)]) -> ComplexVector {
    let mut v = ComplexVector::from_fn(8, |_| linalg::ZERO);
    for &(row, amp) in terms {
        v[row] += amp;
    }
    v
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Unperturbed H₀ + H_AXB spectrum with first-order shifts from H_AB.
pub fn weak_spectrum(p: &ModelParams) -> Result<PerturbativeSpectrum, PerturbationError> {
    if !(p.epsilon > 0.0) {
        return Err(PerturbationError::InvalidRegime {
            regime: Regime::Weak,
            requirement: "epsilon > 0",
        });
    }
    let (w, e) = (p.omega, p.epsilon);
    let half = 0.5 * p.eta * p.phi_eta.cos();
    let full = -p.eta * p.phi_eta.cos();
    let h = real(0.5);
    let r = real(FRAC_1_SQRT_2);
    // |Ψˢ⟩ = (|↓↑⟩ + |↑↓⟩)/√2, |Ψᴬ⟩ = (|↓↑⟩ − |↑↓⟩)/√2
    let levels = vec![
        Level {
            zeroth_order: 3.0 * w,
            first_order: 0.0,
            label: "|uu>|u>X",
            state: ket(&[(UUU, real(1.0))]),
        },
        Level {
            zeroth_order: 2.0 * w + e * SQRT_2,
            first_order: half,
            label: "(|uu>|d>X + |PsiS>|u>X)/sqrt2",
            state: ket(&[(UUD, r), (UDU, h), (DUU, h)]),
        },
        Level {
            zeroth_order: 2.0 * w - e * SQRT_2,
            first_order: half,
            label: "(|uu>|d>X - |PsiS>|u>X)/sqrt2",
            state: ket(&[(UUD, r), (UDU, -h), (DUU, -h)]),
        },
        Level {
            zeroth_order: 2.0 * w,
            first_order: full,
            label: "|PsiA>|u>X",
            state: ket(&[(DUU, r), (UDU, -r)]),
        },
        Level {
            zeroth_order: w + e * SQRT_2,
            first_order: half,
            label: "(|dd>|u>X + |PsiS>|d>X)/sqrt2",
            state: ket(&[(DDU, r), (UDD, h), (DUD, h)]),
        },
        Level {
            zeroth_order: w - e * SQRT_2,
            first_order: half,
            label: "(|dd>|u>X - |PsiS>|d>X)/sqrt2",
            state: ket(&[(DDU, r), (UDD, -h), (DUD, -h)]),
        },
        Level {
            zeroth_order: w,
            first_order: full,
            label: "|PsiA>|d>X",
            state: ket(&[(DUD, r), (UDD, -r)]),
        },
        Level {
            zeroth_order: 0.0,
            first_order: 0.0,
            label: "|dd>|d>X",
            state: ket(&[(DDD, real(1.0))]),
        },
    ];
    Ok(PerturbativeSpectrum {
        regime: Regime::Weak,
        levels,
    })
}

/// Unperturbed H₀ + H_AB spectrum; H_AXB has vanishing first-order shifts.
pub fn strong_spectrum(p: &ModelParams) -> Result<PerturbativeSpectrum, PerturbationError> {
    if !(p.eta > 0.0) {
        return Err(PerturbationError::InvalidRegime {
            regime: Regime::Strong,
            requirement: "eta > 0",
        });
    }
    let (w, eta) = (p.omega, p.eta);
    let r = real(FRAC_1_SQRT_2);
    let ph = C64::from_polar(FRAC_1_SQRT_2, -p.phi_eta);
    let level = |zeroth_order, label, state| Level {
        zeroth_order,
        first_order: 0.0,
        label,
        state,
    };
    let levels = vec![
        level(3.0 * w, "|uu>|u>X", ket(&[(UUU, real(1.0))])),
        level(2.0 * w + eta, "(|ud> + e^-iphi|du>)|u>X/sqrt2", ket(&[(UDU, r), (DUU, ph)])),
        level(2.0 * w - eta, "(|ud> - e^-iphi|du>)|u>X/sqrt2", ket(&[(UDU, r), (DUU, -ph)])),
        level(2.0 * w, "|uu>|d>X", ket(&[(UUD, real(1.0))])),
        level(w + eta, "(|ud> + e^-iphi|du>)|d>X/sqrt2", ket(&[(UDD, r), (DUD, ph)])),
        level(w - eta, "(|ud> - e^-iphi|du>)|d>X/sqrt2", ket(&[(UDD, r), (DUD, -ph)])),
        level(w, "|dd>|u>X", ket(&[(DDU, real(1.0))])),
        level(0.0, "|dd>|d>X", ket(&[(DDD, real(1.0))])),
    ];
    Ok(PerturbativeSpectrum {
        regime: Regime::Strong,
        levels,
    })
}

pub fn spectrum(p: &ModelParams, regime: Regime) -> Result<PerturbativeSpectrum, PerturbationError> {
    match regime {
        Regime::Weak => weak_spectrum(p),
        Regime::Strong => strong_spectrum(p),
    }
}

/// One predicted level paired with its exact counterpart.
#[derive(Debug, Clone)]
pub struct MatchedLevel {
    pub level: Level,
    pub exact: f64,
    /// Unit-norm exact eigenvector of the matched eigenvalue.
    pub exact_state: ComplexVector,
}

impl MatchedLevel {
    pub fn residual(&self) -> f64 {
        (self.exact - self.level.predicted()).abs()
    }

    /// 1 − |⟨exact|unperturbed⟩|².
    pub fn overlap_deficit(&self) -> f64 {
        1.0 - self.exact_state.inner(&self.level.state).norm_sqr()
    }
}

#[derive(Debug, Clone)]
pub struct OrderReport {
    pub regime: Regime,
    pub params: ModelParams,
    pub matches: Vec<MatchedLevel>,
    pub max_residual: f64,
    /// Smallest gap between distinct predicted levels.
    pub min_spacing: f64,
}

/// Diagonalizes the exact Hamiltonian and pairs its levels with the
/// perturbative prediction by greedy nearest assignment.
pub fn verify_order(p: &ModelParams, regime: Regime) -> Result<OrderReport, PerturbationError> {
    let spec = spectrum(p, regime)?;
    let (evals, evecs) = linalg::hermitian_eig(&build_hamiltonian(p))?;
    let n = spec.levels.len();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (li, level) in spec.levels.iter().enumerate() {
        for (ei, &e) in evals.iter().enumerate() {
            candidates.push(((e - level.predicted()).abs(), li, ei));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut level_used = vec![false; n];
    let mut exact_used = vec![false; n];
    let mut pairing = vec![usize::MAX; n];
    for (_, li, ei) in candidates {
        if !level_used[li] && !exact_used[ei] {
            level_used[li] = true;
            exact_used[ei] = true;
            pairing[li] = ei;
        }
    }

    let matches: Vec<MatchedLevel> = spec
        .levels
        .into_iter()
        .zip(&pairing)
        .map(|(level, &ei)| MatchedLevel {
            level,
            exact: evals[ei],
            exact_state: evecs.column(ei),
        })
        .collect();
    let max_residual = matches.iter().map(MatchedLevel::residual).fold(0.0, f64::max);

    let scale = matches.iter().map(|m| m.level.predicted().abs()).fold(1.0, f64::max);
    let mut min_spacing = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (matches[i].level.predicted() - matches[j].level.predicted()).abs();
            // coincident predictions are interchangeable
            if d > 1e-12 * scale {
                min_spacing = min_spacing.min(d);
            }
        }
    }
    if min_spacing < 10.0 * max_residual {
        return Err(PerturbationError::AssignmentAmbiguous {
            spacing: min_spacing,
            residual: max_residual,
        });
    }
    Ok(OrderReport {
        regime,
        params: *p,
        matches,
        max_residual,
        min_spacing,
    })
}

/// Residuals at a sequence of coupling values, the small parameter being
/// η/ε (weak) or ε/η (strong) with the other coupling held at `base`.
pub fn scaling_study(base: &ModelParams, regime: Regime, small: &[f64]) -> Result<Vec<OrderReport>, PerturbationError> {
    small
        .iter()
        .map(|&s| {
            let p = match regime {
                Regime::Weak => ModelParams {
                    eta: s * base.epsilon,
                    ..*base
                },
                Regime::Strong => ModelParams {
                    epsilon: s * base.eta,
                    ..*base
                },
            };
            verify_order(&p, regime)
        })
        .collect()
}

/// H₀ + H_AB: the printed Hamiltonian with ε set to zero.
pub fn strong_unperturbed_hamiltonian(p: &ModelParams) -> ComplexMatrix {
    build_hamiltonian(&ModelParams { epsilon: 0.0, ..*p })
}

/// H₀ + H_AXB: the printed Hamiltonian with η set to zero.
pub fn weak_unperturbed_hamiltonian(p: &ModelParams) -> ComplexMatrix {
    build_hamiltonian(&ModelParams { eta: 0.0, ..*p })
}
