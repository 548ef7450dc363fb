//! Dense complex linear algebra for the small (dimension ≤ 8) matrices used
//! throughout the simulator.
//!
//! Everything here is a pure function of its inputs. The kernels are
//! written for clarity at tiny sizes rather than asymptotic speed.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Shorthand for the complex scalar used everywhere in the crate.
pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Numerical tolerances shared by operations and tests.
pub mod tol {
    /// Max-entry deviation from Hermiticity accepted by `hermitian_eig`.
    pub const HERMITIAN: f64 = 1e-12;
    /// Jacobi stops once the off-diagonal Frobenius norm falls below this,
    /// relative to `max(1, ‖m‖_F)`.
    pub const JACOBI_OFF: f64 = 1e-14;
    pub const JACOBI_MAX_SWEEPS: usize = 100;
    /// Iteration budget per eigenvalue for the Schur QR iteration.
    pub const QR_ITERS_PER_EIGENVALUE: usize = 60;
    /// Right-eigenvector matrices with a 1-norm condition estimate above
    /// this are reported as defective.
    pub const DEFECTIVE_CONDITION: f64 = 1e8;
    /// `invert` refuses matrices whose condition estimate exceeds this.
    pub const SINGULAR_CONDITION: f64 = 1e10;
    /// Unit-norm tolerance for vectors standing for physical states.
    pub const STATE_NORM: f64 = 1e-12;
}

#[derive(Debug, Clone, Error)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (max |m - m†| = {max_deviation:e})")]
    NotHermitian { max_deviation: f64 },
    #[error("{routine} did not converge for matrix\n{matrix}")]
    NoConvergence {
        routine: &'static str,
        matrix: ComplexMatrix,
    },
    #[error("matrix is singular or too ill-conditioned (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Dense square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major entries. Panics if the length is not a
    /// perfect square.
    pub fn from_rows(entries: Vec<C64>) -> Self {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        assert_eq!(dim * dim, entries.len(), "entry count is not a square");
        assert!(dim > 0, "matrix dimension must be positive");
        Self { dim, data: entries }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { ZERO })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[ComplexVector]) -> Self {
        let dim = cols.len();
        for c in cols {
            assert_eq!(c.dim(), dim, "columns must form a square matrix");
        }
        Self::from_fn(dim, |i, j| cols[j][i])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        ComplexVector::from_fn(self.dim, |i| self[(i, j)])
    }

    pub fn row(&self, i: usize) -> ComplexVector {
        ComplexVector::from_fn(self.dim, |j| self[(i, j)])
    }

    pub fn mul_vec(&self, v: &ComplexVector) -> ComplexVector {
        assert_eq!(self.dim, v.dim(), "matrix-vector dimension mismatch");
        ComplexVector::from_fn(self.dim, |i| {
            (0..self.dim).map(|k| self[(i, k)] * v[k]).sum()
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Max-entry deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let n = other.dim;
        Self::from_fn(self.dim * n, |i, j| {
            self[(i / n, j / n)] * other[(i % n, j % n)]
        })
    }

    /// Conjugation by a permutation: result[(i, j)] = self[(perm[i], perm[j])].
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.dim, "permutation length mismatch");
        Self::from_fn(self.dim, |i, j| self[(perm[i], perm[j])])
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut acc = Self::identity(self.dim);
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Largest singular value, the square root of the top eigenvalue of m†m.
    pub fn spectral_norm(&self) -> Result<f64, LinalgError> {
        let gram = &self.adjoint() * self;
        let gram = hermitize(&gram);
        let (evals, _) = hermitian_eig(&gram)?;
        Ok(evals.last().copied().unwrap_or(0.0).max(0.0).sqrt())
    }
}

/// Symmetrizes away round-off: returns (m + m†)/2.
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    let adj = m.adjoint();
    ComplexMatrix::from_fn(m.dim(), |i, j| (m[(i, j)] + adj[(i, j)]) * 0.5)
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix product dimension mismatch");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix sum dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix difference dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6e}{:+.6e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Dense complex vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    data: Vec<C64>,
}

impl ComplexVector {
    pub fn new(data: Vec<C64>) -> Self {
        assert!(!data.is_empty(), "vector dimension must be positive");
        Self { data }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> C64) -> Self {
        Self::new((0..dim).map(f).collect())
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        Self::from_fn(dim, |i| if i == k { ONE } else { ZERO })
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scale(C64::new(1.0 / n, 0.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.data.iter().map(|z| z * s).collect())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.data.iter().map(|z| z.conj()).collect())
    }

    /// Inner product ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.dim(), other.dim(), "inner product dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Outer product |self⟩⟨other|.
    pub fn outer(&self, other: &Self) -> ComplexMatrix {
        assert_eq!(self.dim(), other.dim(), "outer product dimension mismatch");
        ComplexMatrix::from_fn(self.dim(), |i, j| self.data[i] * other.data[j].conj())
    }

    pub fn kron(&self, other: &Self) -> Self {
        let n = other.dim();
        Self::from_fn(self.dim() * n, |i| self.data[i / n] * other.data[i % n])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for ComplexVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.data[i]
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues come back ascending, with eigenvectors as the
/// columns of the returned unitary.
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    let defect = m.hermiticity_defect();
    if !(defect <= tol::HERMITIAN) {
        return Err(LinalgError::NotHermitian {
            max_deviation: defect,
        });
    }
    let n = m.dim();
    let mut a = hermitize(m);
    let mut w = ComplexMatrix::identity(n);
    let threshold = tol::JACOBI_OFF * a.frobenius_norm().max(1.0);

    let off_norm = |a: &ComplexMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) < threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps >= tol::JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                routine: "hermitian_eig",
                matrix: m.clone(),
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                jacobi_rotate(&mut a, &mut w, p, q);
            }
        }
        sweeps += 1;
        converged = off_norm(&a) < threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let evals = order.iter().map(|&i| a[(i, i)].re).collect();
    let evecs = ComplexMatrix::from_fn(n, |i, j| w[(i, order[j])]);
    Ok((evals, evecs))
}

/// One two-sided rotation zeroing a[p][q]; a ← J† a J, w ← w J.
fn jacobi_rotate(a: &mut ComplexMatrix, w: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r < f64::MIN_POSITIVE {
        return;
    }
    let n = a.dim();
    let phase = apq / r; // e^{iα}
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta.is_infinite() {
        0.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // J restricted to (p, q): [[c, s], [-s e^{-iα}, c e^{-iα}]]
    let jpp = C64::new(c, 0.0);
    let jpq = C64::new(s, 0.0);
    let jqp = -phase.conj() * s;
    let jqq = phase.conj() * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * jpp + akq * jqp;
        a[(k, q)] = akp * jpq + akq * jqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
        a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let wkp = w[(k, p)];
        let wkq = w[(k, q)];
        w[(k, p)] = wkp * jpp + wkq * jqp;
        w[(k, q)] = wkp * jpq + wkq * jqq;
    }
}

/// `exp(-i h tau)` by spectral decomposition of the Hermitian `h`.
pub fn unitary_propagator(h: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix, LinalgError> {
    let (evals, w) = hermitian_eig(h)?;
    let phases: Vec<C64> = evals
        .iter()
        .map(|&e| C64::from_polar(1.0, -e * tau))
        .collect();
    let n = h.dim();
    let mut scaled = w.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= phases[j];
        }
    }
    Ok(&scaled * &w.adjoint())
}

/// Eigenvalues and unit-norm right eigenvectors of a general complex matrix.
#[derive(Debug, Clone)]
pub struct GeneralEigen {
    pub eigenvalues: Vec<C64>,
    /// Columns are the right eigenvectors, in the order of `eigenvalues`.
    pub right_vecs: ComplexMatrix,
    /// 1-norm condition estimate of `right_vecs` (infinite if singular).
    pub condition: f64,
    /// Set when `condition` exceeds [`tol::DEFECTIVE_CONDITION`].
    pub defective: bool,
}

/// Eigendecomposition of a 4×4 complex matrix: balancing, Hessenberg
/// reduction, shifted QR to complex Schur form, then back-substitution on
/// the triangular factor for the eigenvectors.
pub fn general_eig(m: &ComplexMatrix) -> Result<GeneralEigen, LinalgError> {
    if m.dim() != 4 {
        return Err(LinalgError::DimensionMismatch {
            expected: 4,
            found: m.dim(),
        });
    }
    general_eig_any(m)
}

/// Same algorithm as [`general_eig`] without the 4×4 restriction.
pub fn general_eig_any(m: &ComplexMatrix) -> Result<GeneralEigen, LinalgError> {
    let n = m.dim();
    let (balanced, scaling) = balance(m);
    let (mut t, mut z) = hessenberg(&balanced);
    schur_qr(&mut t, &mut z).map_err(|_| LinalgError::NoConvergence {
        routine: "general_eig",
        matrix: m.clone(),
    })?;

    let eigenvalues: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let y = triangular_eigenvectors(&t);
    let zy = &z * &y;
    let cols: Vec<ComplexVector> = (0..n)
        .map(|k| {
            let v = ComplexVector::from_fn(n, |i| zy[(i, k)] * scaling[i]);
            v.normalized()
        })
        .collect();
    let right_vecs = ComplexMatrix::from_columns(&cols);
    let condition = condition_estimate(&right_vecs);
    Ok(GeneralEigen {
        eigenvalues,
        right_vecs,
        condition,
        defective: !(condition <= tol::DEFECTIVE_CONDITION),
    })
}

/// Parlett–Reinsch balancing with powers of two. Returns `(d⁻¹ m d, diag(d))`.
fn balance(m: &ComplexMatrix) -> (ComplexMatrix, Vec<f64>) {
    const RADIX: f64 = 2.0;
    let n = m.dim();
    let mut a = m.clone();
    let mut d = vec![1.0; n];
    let mut done = false;
    let mut rounds = 0;
    while !done && rounds < 100 {
        done = true;
        rounds += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].l1_norm();
                    r += a[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            while cc < r / RADIX {
                cc *= RADIX;
                f *= RADIX;
            }
            while cc >= r * RADIX {
                cc /= RADIX;
                f /= RADIX;
            }
            if (cc + r / f) < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    (a, d)
}

/// Householder reduction to upper Hessenberg form: m = q h q†.
fn hessenberg(m: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = m.dim();
    let mut h = m.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let alpha_norm: f64 = ((k + 1)..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm < f64::MIN_POSITIVE {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        // v = x + e^{i arg x0} ‖x‖ e_1
        let mut v = vec![ZERO; n];
        for i in (k + 1)..n {
            v[i] = h[(i, k)];
        }
        v[k + 1] += phase * alpha_norm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 < f64::MIN_POSITIVE {
            continue;
        }
        // h ← P h P with P = I - 2 v v† / (v†v)
        for j in 0..n {
            let s: C64 = ((k + 1)..n).map(|i| v[i].conj() * h[(i, j)]).sum();
            let f = s * (2.0 / vnorm2);
            for i in (k + 1)..n {
                h[(i, j)] -= v[i] * f;
            }
        }
        for i in 0..n {
            let s: C64 = ((k + 1)..n).map(|j| h[(i, j)] * v[j]).sum();
            let f = s * (2.0 / vnorm2);
            for j in (k + 1)..n {
                h[(i, j)] -= f * v[j].conj();
            }
        }
        for i in 0..n {
            let s: C64 = ((k + 1)..n).map(|j| q[(i, j)] * v[j]).sum();
            let f = s * (2.0 / vnorm2);
            for j in (k + 1)..n {
                q[(i, j)] -= f * v[j].conj();
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, q)
}

/// Complex Givens rotation [[c, s], [-s̄, c]] with real c such that it maps
/// (a, b) to (r, 0).
fn givens(a: C64, b: C64) -> (f64, C64) {
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, ZERO);
    }
    let an = a.norm();
    if an == 0.0 {
        return (0.0, (b / bn).conj());
    }
    let norm = an.hypot(bn);
    let c = an / norm;
    let s = (a / an) * b.conj() / norm;
    (c, s)
}

/// Rotate rows (i, i+1) of `m` on columns `cols` by G = [[c, s], [-s̄, c]].
fn rotate_rows(m: &mut ComplexMatrix, i: usize, c: f64, s: C64, cols: std::ops::Range<usize>) {
    for j in cols {
        let x = m[(i, j)];
        let y = m[(i + 1, j)];
        m[(i, j)] = x * c + s * y;
        m[(i + 1, j)] = -s.conj() * x + y * c;
    }
}

/// Rotate columns (i, i+1) of `m` on rows `rows` by G†.
fn rotate_cols(m: &mut ComplexMatrix, i: usize, c: f64, s: C64, rows: std::ops::Range<usize>) {
    for k in rows {
        let x = m[(k, i)];
        let y = m[(k, i + 1)];
        m[(k, i)] = x * c + y * s.conj();
        m[(k, i + 1)] = -s * x + y * c;
    }
}

struct SchurFailure;

/// Implicit single-shift QR on an upper Hessenberg matrix, driving it to
/// upper triangular form and accumulating the unitary into `z`.
fn schur_qr(h: &mut ComplexMatrix, z: &mut ComplexMatrix) -> Result<(), SchurFailure> {
    let n = h.dim();
    if n == 1 {
        return Ok(());
    }
    let norm = h.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let budget = tol::QR_ITERS_PER_EIGENVALUE * n;

    while hi > 0 {
        // find the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let scale = if diag > 0.0 { diag } else { norm };
            if sub <= f64::EPSILON * scale {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        if total >= budget {
            return Err(SchurFailure);
        }
        iter += 1;
        total += 1;

        let shift = if iter % 11 == 0 {
            // exceptional shift to break cycles
            h[(hi, hi)] + C64::new(h[(hi, hi - 1)].norm(), 0.0) * 0.75
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };

        // bulge chase on the active block lo..=hi
        let mut x = h[(lo, lo)] - shift;
        let mut y = h[(lo + 1, lo)];
        for k in lo..hi {
            let (c, s) = givens(x, y);
            let col_start = if k > lo { k - 1 } else { lo };
            rotate_rows(h, k, c, s, col_start..n);
            let row_end = (k + 3).min(hi + 1);
            rotate_cols(h, k, c, s, 0..row_end);
            rotate_cols(z, k, c, s, 0..n);
            if k > lo {
                h[(k + 1, k - 1)] = ZERO;
            }
            if k + 1 < hi {
                x = h[(k + 1, k)];
                y = h[(k + 2, k)];
            }
        }
    }
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok(())
}

/// Eigenvalue of the trailing 2×2 block closest to its bottom-right entry.
fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let tr_half = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (tr_half * tr_half - det).sqrt();
    let l1 = tr_half + disc;
    let l2 = tr_half - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Right eigenvectors of an upper triangular matrix, as columns.
fn triangular_eigenvectors(t: &ComplexMatrix) -> ComplexMatrix {
    let n = t.dim();
    let small = f64::EPSILON * t.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut y = ComplexMatrix::zeros(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = ONE;
        for j in (0..k).rev() {
            let mut s = ZERO;
            for l in (j + 1)..=k {
                s += t[(j, l)] * y[(l, k)];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < small {
                denom = C64::new(small, 0.0);
            }
            y[(j, k)] = -s / denom;
        }
    }
    y
}

/// 1-norm condition estimate ‖m‖₁·‖m⁻¹‖₁ (infinite when m is singular).
pub fn condition_estimate(m: &ComplexMatrix) -> f64 {
    match gauss_jordan(m) {
        Some(inv) => m.norm_one() * inv.norm_one(),
        None => f64::INFINITY,
    }
}

/// Inverse with a condition guard of [`tol::SINGULAR_CONDITION`].
pub fn invert(m: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let inv = gauss_jordan(m).ok_or(LinalgError::SingularMatrix {
        condition: f64::INFINITY,
    })?;
    let condition = m.norm_one() * inv.norm_one();
    if !(condition <= tol::SINGULAR_CONDITION) {
        return Err(LinalgError::SingularMatrix { condition });
    }
    Ok(inv)
}

/// Gauss–Jordan elimination with partial pivoting.
fn gauss_jordan(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = m.dim();
    let mut a = m.clone();
    let mut inv = ComplexMatrix::identity(n);
    let scale = m.max_abs();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm()))
            .expect("non-empty pivot range");
        if a[(pivot, col)].norm() <= f64::EPSILON * scale * 1e-3 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(pivot, j)];
                a[(pivot, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(pivot, j)];
                inv[(pivot, j)] = t;
            }
        }
        let p = ONE / a[(col, col)];
        for j in 0..n {
            a[(col, j)] *= p;
            inv[(col, j)] *= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[(i, col)];
            if f == ZERO {
                continue;
            }
            for j in 0..n {
                let acj = a[(col, j)];
                let icj = inv[(col, j)];
                a[(i, j)] -= f * acj;
                inv[(i, j)] -= f * icj;
            }
        }
    }
    Some(inv)
}

/// Reduced state of the second qubit of a two-qubit density matrix in the
/// (↑↑, ↑↓, ↓↑, ↓↓) ordering: traces out the first qubit.
pub fn partial_trace_first(rho: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(rho.dim(), 4, "partial_trace_first expects a 4×4 matrix");
    ComplexMatrix::from_fn(2, |s, t| rho[(s, t)] + rho[(2 + s, 2 + t)])
}
