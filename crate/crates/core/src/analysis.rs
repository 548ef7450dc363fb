//! Biorthogonal spectral analysis of V(τ), the extraction witnesses, and
//! conditional N-step evolution of the AB state.

use std::cmp::Ordering;

use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, ComplexVector, LinalgError, C64, ZERO};

/// |λ₁| − |λ₂| below this marks the top of the spectrum as degenerate.
pub const GAP_TOL: f64 = 1e-9;
/// Moduli closer than this are ordered by the real/imaginary tie-break.
pub const MODULUS_TIE_TOL: f64 = 1e-12;
/// Biorthonormality residual accepted for non-defective spectra.
pub const BIORTHO_TOL: f64 = 1e-9;
/// Norm deviation accepted by [`entanglement_upsilon`].
pub const NORMALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Error)]
pub enum AnalysisError {
    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },
    #[error("|λ₁| = |λ₂|: the asymptotic extraction formula does not apply")]
    DegenerateTop,
    #[error("eigenvector matrix is numerically defective (condition estimate {condition:e})")]
    DefectiveMatrix { condition: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensity(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Sorted eigensystem of V(τ) with biorthonormal left vectors.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Sorted by descending modulus.
    pub eigenvalues: Vec<C64>,
    /// Unit-norm right eigenvectors |λ_k⟩.
    pub right_vecs: Vec<ComplexVector>,
    /// Components of the bras ⟨λ̃_k|, i.e. the rows of the inverse of the
    /// right-eigenvector matrix, so that Σ_m left[i][m]·right[j][m] = δ_ij.
    /// `None` when the eigenvector matrix is defective.
    pub left_vecs: Option<Vec<ComplexVector>>,
    pub degenerate_top: bool,
    pub defective: bool,
    /// 1-norm condition estimate of the right-eigenvector matrix.
    pub condition: f64,
}

impl SpectralData {
    /// ⟨λ̃_i|λ_j⟩ pairing of a bra (given as components) with a ket.
    fn pair(bra: &ComplexVector, ket: &ComplexVector) -> C64 {
        bra.as_slice().iter().zip(ket.as_slice()).map(|(b, k)| b * k).sum()
    }

    /// max_{i,j} |⟨λ̃_i|λ_j⟩ − δ_ij|, or `None` without left vectors.
    pub fn biorthogonality_residual(&self) -> Option<f64> {
        let left = self.left_vecs.as_ref()?;
        let mut worst: f64 = 0.0;
        for (i, l) in left.iter().enumerate() {
            for (j, r) in self.right_vecs.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((Self::pair(l, r) - target).norm());
            }
        }
        Some(worst)
    }

    /// Σ_k λ_k^n |λ_k⟩⟨λ̃_k|.
    pub fn reconstruct_power(&self, n: u32) -> Option<ComplexMatrix> {
        let left = self.left_vecs.as_ref()?;
        let dim = self.right_vecs.len();
        let mut acc = ComplexMatrix::zeros(dim);
        for k in 0..dim {
            let lk = self.eigenvalues[k].powu(n);
            for i in 0..dim {
                for j in 0..dim {
                    acc[(i, j)] += lk * self.right_vecs[k][i] * left[k][j];
                }
            }
        }
        Some(acc)
    }

    /// ⟨λ̃_k|ρ|λ̃_j⟩ with the ket |λ̃_j⟩ taken as the conjugate transpose of
    /// the bra ⟨λ̃_j|.
    pub fn left_sandwich(&self, rho: &ComplexMatrix, k: usize, j: usize) -> Option<C64> {
        let left = self.left_vecs.as_ref()?;
        let (lk, lj) = (&left[k], &left[j]);
        let dim = rho.dim();
        let mut acc = ZERO;
        for m in 0..dim {
            for n in 0..dim {
                acc += lk[m] * rho[(m, n)] * lj[n].conj();
            }
        }
        Some(acc)
    }
}

/// Orders eigenvalue indices by descending modulus; near-equal moduli fall
/// back to descending real part, then descending imaginary part.
fn spectral_order(values: &[C64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].norm().total_cmp(&values[a].norm()));
    let tie_break = |a: &usize, b: &usize| -> Ordering {
        let (x, y) = (values[*a], values[*b]);
        y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im))
    };
    let mut start = 0;
    while start < order.len() {
        let head = values[order[start]].norm();
        let mut end = start + 1;
        while end < order.len() && head - values[order[end]].norm() < MODULUS_TIE_TOL {
            end += 1;
        }
        order[start..end].sort_by(tie_break);
        start = end;
    }
    order
}

/// Sorted eigensystem of a 4×4 effective operator with left eigenvectors
/// from the inverse of the right-eigenvector matrix.
pub fn spectral_decompose(v: &ComplexMatrix) -> Result<SpectralData, AnalysisError> {
    let eig = linalg::general_eig(v)?;
    let order = spectral_order(&eig.eigenvalues);
    let eigenvalues: Vec<C64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let right_vecs: Vec<ComplexVector> = order.iter().map(|&k| eig.right_vecs.column(k)).collect();

    let mut defective = eig.defective;
    let left_vecs = if defective {
        None
    } else {
        let r = ComplexMatrix::from_columns(&right_vecs);
        match linalg::invert(&r) {
            Ok(inv) => Some((0..r.dim()).map(|k| inv.row(k)).collect()),
            Err(_) => {
                defective = true;
                None
            }
        }
    };
    let degenerate_top =
        eigenvalues.len() < 2 || eigenvalues[0].norm() - eigenvalues[1].norm() < GAP_TOL;

    Ok(SpectralData {
        eigenvalues,
        right_vecs,
        left_vecs,
        degenerate_top,
        defective,
        condition: eig.condition,
    })
}

/// Υ, Λ and Σ of one effective operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessTriple {
    /// Entanglement of the extracted state |λ₁⟩.
    pub upsilon: f64,
    /// Efficiency 1 − |λ₂/λ₁|².
    pub lambda_eff: f64,
    /// Stability |λ₁|².
    pub sigma: f64,
    pub degenerate_top: bool,
}

/// 2(1 − tr ρ_B²) for the pure two-qubit state `state`.
pub fn entanglement_upsilon(state: &ComplexVector) -> Result<f64, AnalysisError> {
    assert_eq!(state.dim(), 4, "two-qubit state must be a 4-vector");
    let norm = state.norm();
    if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
        return Err(AnalysisError::NotNormalized { norm });
    }
    let rho_b = linalg::partial_trace_first(&state.outer(state));
    let purity = (&rho_b * &rho_b).trace().re;
    Ok((2.0 * (1.0 - purity)).clamp(0.0, 1.0))
}

pub fn witnesses(sd: &SpectralData) -> WitnessTriple {
    let l1 = sd.eigenvalues[0].norm();
    let l2 = sd.eigenvalues[1].norm();
    // a degenerate top pair takes the formula's limiting value
    let lambda_eff = if l1 < 1e-14 || sd.degenerate_top {
        0.0
    } else {
        (1.0 - (l2 / l1).powi(2)).max(0.0)
    };
    // right vectors are unit norm by construction
    let upsilon = entanglement_upsilon(&sd.right_vecs[0]).unwrap_or(0.0);
    WitnessTriple {
        upsilon,
        lambda_eff,
        sigma: l1 * l1,
        degenerate_top: sd.degenerate_top,
    }
}

/// A 4×4 AB density matrix, possibly unnormalized (conditional states).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-12;
    pub const PSD_TOL: f64 = 1e-10;

    /// Validates Hermiticity, trace ∈ [0, 1] and positivity.
    pub fn new(m: ComplexMatrix) -> Result<Self, AnalysisError> {
        if !m.is_finite() {
            return Err(AnalysisError::InvalidDensity("non-finite entries"));
        }
        if m.hermiticity_defect() > Self::HERMITIAN_TOL {
            return Err(AnalysisError::InvalidDensity("not Hermitian"));
        }
        let tr = m.trace().re;
        if tr < -Self::TRACE_TOL || tr > 1.0 + Self::TRACE_TOL {
            return Err(AnalysisError::InvalidDensity("trace outside [0, 1]"));
        }
        let (evals, _) = linalg::hermitian_eig(&linalg::hermitize(&m))?;
        if evals[0] < -Self::PSD_TOL {
            return Err(AnalysisError::InvalidDensity("not positive semidefinite"));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix known to be a valid density matrix by construction.
    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn pure(psi: &ComplexVector) -> Result<Self, AnalysisError> {
        let norm = psi.norm();
        if !((norm - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(AnalysisError::NotNormalized { norm });
        }
        Ok(Self(psi.outer(psi)))
    }

    pub fn maximally_mixed() -> Self {
        Self(ComplexMatrix::identity(4).scale(C64::new(0.25, 0.0)))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Rescaled to unit trace (returned unchanged when the trace vanishes).
    pub fn normalized(&self) -> Self {
        let tr = self.trace();
        if tr > 0.0 {
            Self(self.0.scale(C64::new(1.0 / tr, 0.0)))
        } else {
            self.clone()
        }
    }
}

/// Vⁿ ρ₀ (V†)ⁿ by repeated multiplication; its trace is the probability of
/// n consecutive successful measurements.
pub fn evolve_conditional(v: &ComplexMatrix, rho0: &DensityMatrix, n: u32) -> DensityMatrix {
    let vd = v.adjoint();
    let mut rho = rho0.matrix().clone();
    for _ in 0..n {
        rho = &(v * &rho) * &vd;
    }
    DensityMatrix::from_trusted(linalg::hermitize(&rho))
}

/// Asymptotic probability ⟨λ̃₁|ρ₀|λ̃₁⟩·|λ₁|^{2n} of having extracted |λ₁⟩.
pub fn success_probability(sd: &SpectralData, rho0: &DensityMatrix, n: u32) -> Result<f64, AnalysisError> {
    if sd.defective {
        return Err(AnalysisError::DefectiveMatrix {
            condition: sd.condition,
        });
    }
    if sd.degenerate_top {
        return Err(AnalysisError::DegenerateTop);
    }
    let weight = sd
        .left_sandwich(rho0.matrix(), 0, 0)
        .ok_or(AnalysisError::DefectiveMatrix {
            condition: sd.condition,
        })?;
    let l1 = sd.eigenvalues[0].norm();
    Ok((weight.re * l1.powi(2 * n as i32)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{effective_operator, AncillaState, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn reference_v() -> ComplexMatrix {
        let p = ModelParams::in_epsilon_units(2.0, 0.0, 0.0).unwrap();
        effective_operator(&p, &AncillaState::new(PI / 4.0, 0.0).unwrap(), 2.0).unwrap()
    }

    fn random_density(rng: &mut impl Rng) -> DensityMatrix {
        let w = ComplexMatrix::from_fn(4, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = &w * &w.adjoint();
        let tr = m.trace().re;
        DensityMatrix::new(linalg::hermitize(&m.scale(c(1.0 / tr, 0.0)))).unwrap()
    }

    #[test]
    fn identity_is_degenerate() {
        let sd = spectral_decompose(&ComplexMatrix::identity(4)).unwrap();
        assert!(sd.degenerate_top);
        assert!(sd.eigenvalues.iter().all(|l| (l - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn diagonal_spectrum_sorted() {
        let v = ComplexMatrix::from_real_diag(&[0.2, 0.9, 0.1, 0.3]);
        let sd = spectral_decompose(&v).unwrap();
        let moduli: Vec<f64> = sd.eigenvalues.iter().map(|l| l.norm()).collect();
        assert!((moduli[0] - 0.9).abs() < 1e-15);
        assert!(moduli.windows(2).all(|p| p[0] >= p[1]));
        assert!(!sd.degenerate_top);
        let left = sd.left_vecs.as_ref().unwrap();
        for k in 0..4 {
            // each right vector is a basis vector up to phase, the left vector its dual
            let idx = (0..4).max_by(|&a, &b| sd.right_vecs[k][a].norm().total_cmp(&sd.right_vecs[k][b].norm())).unwrap();
            assert!((sd.right_vecs[k][idx].norm() - 1.0).abs() < 1e-15);
            assert!((left[k][idx] * sd.right_vecs[k][idx] - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn tie_break_orders_equal_moduli() {
        let v = ComplexMatrix::from_diag(&[c(0.0, 0.5), c(-0.5, 0.0), c(0.5, 0.0), c(0.0, -0.5)]);
        let sd = spectral_decompose(&v).unwrap();
        let want = [c(0.5, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(-0.5, 0.0)];
        for (got, want) in sd.eigenvalues.iter().zip(want) {
            assert!((got - want).norm() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn reference_point_reconstruction() {
        let v = reference_v();
        let sd = spectral_decompose(&v).unwrap();
        assert!(!sd.defective);
        assert!(sd.biorthogonality_residual().unwrap() < BIORTHO_TOL);
        assert!(sd.reconstruct_power(1).unwrap().max_abs_diff(&v) < 1e-9);
        assert!(sd.eigenvalues[0].norm() <= 1.0 + 1e-10);
    }

    #[test]
    fn upsilon_examples() {
        let up_up = ComplexVector::basis(4, 0);
        assert_eq!(entanglement_upsilon(&up_up).unwrap(), 0.0);
        let r = FRAC_1_SQRT_2;
        let bell = ComplexVector::new(vec![ZERO, c(r, 0.0), c(r, 0.0), ZERO]);
        assert!((entanglement_upsilon(&bell).unwrap() - 1.0).abs() < 1e-15);
        // 0.8|↑↓⟩ + 0.6i|↓↑⟩: ρ_B = diag(0.6², 0.8²)
        let s = ComplexVector::new(vec![ZERO, c(0.8, 0.0), c(0.0, 0.6), ZERO]);
        let want = 2.0 * (1.0 - (0.8f64.powi(4) + 0.6f64.powi(4)));
        assert!((entanglement_upsilon(&s).unwrap() - want).abs() < 1e-15);
        assert!(matches!(
            entanglement_upsilon(&s.scale(c(1.1, 0.0))),
            Err(AnalysisError::NotNormalized { .. })
        ));
    }

    #[test]
    fn upsilon_local_phase_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let psi = ComplexVector::from_fn(4, |_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).normalized();
            let (a, b) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
            let phases = [0.0, a, b, a + b];
            let rotated = ComplexVector::from_fn(4, |i| psi[i] * C64::from_polar(1.0, phases[i]));
            let d = entanglement_upsilon(&psi).unwrap() - entanglement_upsilon(&rotated).unwrap();
            assert!(d.abs() < 1e-14);
        }
    }

    #[test]
    fn witness_examples() {
        let sd = spectral_decompose(&ComplexMatrix::from_diag(&[c(0.0, 0.6), c(0.6, 0.0), c(-0.6, 0.0), c(0.0, -0.6)])).unwrap();
        let w = witnesses(&sd);
        assert!(w.lambda_eff.abs() < 1e-15);
        assert!(w.degenerate_top);

        let sd = spectral_decompose(&ComplexMatrix::from_diag(&[C64::from_polar(1.0, 0.4), c(0.5, 0.0), c(0.1, 0.0), ZERO])).unwrap();
        let w = witnesses(&sd);
        assert!((w.sigma - 1.0).abs() < 1e-14);
        assert!((w.lambda_eff - 0.75).abs() < 1e-14);
    }

    #[test]
    fn witnesses_are_phase_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = ModelParams::in_epsilon_units(2.0, rng.gen_range(0.0..3.0), rng.gen_range(0.0..2.0 * PI)).unwrap();
            let a = AncillaState::new(rng.gen_range(0.05..3.1), 0.0).unwrap();
            let v = effective_operator(&p, &a, rng.gen_range(0.1..10.0)).unwrap();
            let w1 = witnesses(&spectral_decompose(&v).unwrap());
            let w2 = witnesses(&spectral_decompose(&v.scale(C64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)))).unwrap());
            assert!((w1.upsilon - w2.upsilon).abs() < 1e-9);
            assert!((w1.lambda_eff - w2.lambda_eff).abs() < 1e-12);
            assert!((w1.sigma - w2.sigma).abs() < 1e-12);
        }
    }

    #[test]
    fn evolve_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng);
        let v = reference_v();
        assert_eq!(evolve_conditional(&v, &rho, 0), rho);
        let id = ComplexMatrix::identity(4);
        assert!(evolve_conditional(&id, &rho, 7).matrix().max_abs_diff(rho.matrix()) < 1e-15);
    }

    #[test]
    fn evolve_matches_eigen_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = reference_v();
        let sd = spectral_decompose(&v).unwrap();
        let rho0 = random_density(&mut rng);
        let n = 30;
        let direct = evolve_conditional(&v, &rho0, n);
        let mut expansion = ComplexMatrix::zeros(4);
        for k in 0..4 {
            for j in 0..4 {
                let coeff = sd.left_sandwich(rho0.matrix(), k, j).unwrap()
                    * (sd.eigenvalues[k] * sd.eigenvalues[j].conj()).powu(n);
                expansion = &expansion + &sd.right_vecs[k].outer(&sd.right_vecs[j]).scale(coeff);
            }
        }
        assert!(direct.matrix().max_abs_diff(&expansion) < 1e-9);
        assert!((direct.trace() - expansion.trace().re).abs() < 1e-9);
        let nd = direct.normalized();
        let ne = expansion.scale(c(1.0 / expansion.trace().re, 0.0));
        assert!(nd.matrix().max_abs_diff(&ne) < 1e-9);
    }

    #[test]
    fn success_probability_examples() {
        let v = ComplexMatrix::from_diag(&[C64::from_polar(1.0, 0.3), c(0.5, 0.0), c(0.2, 0.0), c(0.1, 0.0)]);
        let sd = spectral_decompose(&v).unwrap();
        let fixed = DensityMatrix::pure(&sd.right_vecs[0]).unwrap();
        for n in [1, 10, 100] {
            assert!((success_probability(&sd, &fixed, n).unwrap() - 1.0).abs() < 1e-12);
        }
        let orth = DensityMatrix::pure(&ComplexVector::basis(4, 1)).unwrap();
        assert!(success_probability(&sd, &orth, 5).unwrap().abs() < 1e-15);

        let sd = spectral_decompose(&ComplexMatrix::identity(4)).unwrap();
        assert!(matches!(
            success_probability(&sd, &fixed, 1),
            Err(AnalysisError::DegenerateTop)
        ));
    }

    #[test]
    fn success_probability_approaches_exact_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::in_epsilon_units(2.0, 0.3, 0.4).unwrap();
        let v = effective_operator(&p, &AncillaState::new(0.3 * PI, 0.0).unwrap(), 1.7).unwrap();
        let sd = spectral_decompose(&v).unwrap();
        assert!(!sd.degenerate_top);
        let rho0 = random_density(&mut rng);
        let ratio = (sd.eigenvalues[1].norm() / sd.eigenvalues[0].norm()).powi(2);
        let mut last = f64::INFINITY;
        for n in [10u32, 20, 30, 40] {
            let exact = evolve_conditional(&v, &rho0, n).trace();
            let asym = success_probability(&sd, &rho0, n).unwrap();
            let rel = (exact - asym).abs() / asym;
            assert!(rel < 20.0 * ratio.powi(n as i32 / 2), "n={n} rel={rel}");
            assert!(rel <= last);
            last = rel;
        }
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(ComplexMatrix::identity(4)).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::from_real_diag(&[0.5, 0.5, -0.1, 0.1])).is_err());
        let non_herm = ComplexMatrix::from_fn(4, |i, j| if i == 0 && j == 1 { c(0.1, 0.0) } else if i == j { c(0.25, 0.0) } else { ZERO });
        assert!(DensityMatrix::new(non_herm).is_err());
        assert!(DensityMatrix::new(DensityMatrix::maximally_mixed().into_matrix()).is_ok());
    }
}
