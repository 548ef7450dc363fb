//! Full eight-dimensional simulation of the repeated-measurement protocol,
//! independent of the projected operator V(τ), plus a seeded sampler of
//! individual measurement trajectories.
//!
//! The full-space path works in tensor order AB ⊗ X (row = 2·ab + x),
//! attaching the ancilla with explicit Kronecker products and tracing it
//! out after each projection.
//!
//! Trajectories draw uniforms from ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! which is portable across platforms. Trials are split into fixed chunks
//! of [`TRIALS_PER_STREAM`]; chunk `c` uses stream `c` of the generator
//! seeded with the user seed, so results do not depend on how chunks are
//! scheduled on workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{DensityMatrix, AnalysisError};
use crate::linalg::{self, ComplexMatrix, ComplexVector, C64};
use crate::model::{ancilla_vector, build_hamiltonian, AncillaState, BasisMap, ModelError, ModelParams};

/// Below this per-step success probability the protocol is considered extinct.
pub const EXTINCTION_PROBABILITY: f64 = 1e-300;
pub const TRIALS_PER_STREAM: u64 = 4096;

#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error("measurement success probability vanished at step {step} (p = {probability:e})")]
    ZeroProbability { step: u32, probability: f64 },
    #[error("invalid oracle input: {0}")]
    InvalidInput(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl From<linalg::LinalgError> for OracleError {
    fn from(e: linalg::LinalgError) -> Self {
        OracleError::Model(ModelError::Linalg(e))
    }
}

#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    pub steps: u32,
    pub survival_probability: f64,
    /// Success probability of each step, conditioned on the previous ones.
    pub step_probabilities: Vec<f64>,
    /// Normalized AB state after the last successful measurement.
    pub conditional_state: DensityMatrix,
}

/// The full-space propagator in tensor order AB ⊗ X.
fn tensor_propagator(p: &ModelParams, tau: f64) -> Result<ComplexMatrix, OracleError> {
    p.validate()?;
    let u = linalg::unitary_propagator(&build_hamiltonian(p), tau)?;
    Ok(u.permuted(&BasisMap::tensor_to_composite()))
}

/// Tr_X of an 8×8 operator in tensor order.
fn trace_out_ancilla(rho: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(4, |a, b| rho[(2 * a, 2 * b)] + rho[(2 * a + 1, 2 * b + 1)])
}

/// I₄ ⊗ |χ⟩⟨χ|.
pub fn measurement_projector(chi: &ComplexVector) -> ComplexMatrix {
    ComplexMatrix::identity(4).kron(&chi.outer(chi))
}

/// Runs `n` rounds of: attach |χ⟩⟨χ|, evolve for τ, project the ancilla
/// back onto |χ⟩, record the success probability, renormalize, discard the
/// ancilla.
pub fn run_protocol(
    p: &ModelParams,
    a: &AncillaState,
    tau: f64,
    rho0: &DensityMatrix,
    n: u32,
) -> Result<MeasurementRecord, OracleError> {
    if n < 1 {
        return Err(OracleError::InvalidInput("n must be at least 1"));
    }
    if (rho0.trace() - 1.0).abs() > 1e-10 {
        return Err(OracleError::InvalidInput("initial state must have unit trace"));
    }
    let u = tensor_propagator(p, tau)?;
    iterate_measurements(&u, &ancilla_vector(a), rho0, n)
}

/// The measurement loop for an explicit tensor-order propagator.
fn iterate_measurements(
    u: &ComplexMatrix,
    chi: &ComplexVector,
    rho0: &DensityMatrix,
    n: u32,
) -> Result<MeasurementRecord, OracleError> {
    let ud = u.adjoint();
    let chi_proj = chi.outer(chi);
    let projector = measurement_projector(chi);

    let mut rho = rho0.matrix().clone();
    let mut step_probabilities = Vec::with_capacity(n as usize);
    let mut survival = 1.0;
    for step in 1..=n {
        let full = rho.kron(&chi_proj);
        let evolved = &(u * &full) * &ud;
        let projected = &(&projector * &evolved) * &projector;
        let prob = projected.trace().re;
        if !(prob >= EXTINCTION_PROBABILITY) {
            return Err(OracleError::ZeroProbability {
                step,
                probability: prob,
            });
        }
        survival *= prob;
        step_probabilities.push(prob);
        let reduced = trace_out_ancilla(&projected).scale(C64::new(1.0 / prob, 0.0));
        rho = linalg::hermitize(&reduced);
    }
    Ok(MeasurementRecord {
        steps: n,
        survival_probability: survival,
        step_probabilities,
        conditional_state: DensityMatrix::from_trusted(rho),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub seed: u64,
    pub trials: u64,
    pub steps: u32,
    pub survivors: u64,
    pub survival_frequency: f64,
    /// Average of |ψ⟩⟨ψ| over surviving trajectories.
    pub mean_surviving_state: Option<ComplexMatrix>,
}

struct ChunkResult {
    survivors: u64,
    state_sum: ComplexMatrix,
}

fn run_chunk(
    u: &ComplexMatrix,
    chi: &ComplexVector,
    psi0: &ComplexVector,
    n: u32,
    seed: u64,
    chunk: u64,
    trials: u64,
) -> ChunkResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let mut survivors = 0;
    let mut state_sum = ComplexMatrix::zeros(4);
    for _ in 0..trials {
        let mut psi = psi0.clone();
        let mut alive = true;
        for _ in 0..n {
            let evolved = u.mul_vec(&psi.kron(chi));
            // (I₄ ⊗ ⟨χ|) on tensor order
            let kept = ComplexVector::from_fn(4, |ab| {
                chi[0].conj() * evolved[2 * ab] + chi[1].conj() * evolved[2 * ab + 1]
            });
            let prob = kept.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
            let draw: f64 = rng.gen();
            if draw >= prob || prob < EXTINCTION_PROBABILITY {
                alive = false;
                break;
            }
            psi = kept.scale(C64::new(1.0 / prob.sqrt(), 0.0));
        }
        if alive {
            survivors += 1;
            state_sum = &state_sum + &psi.outer(&psi);
        }
    }
    ChunkResult {
        survivors,
        state_sum,
    }
}

/// Samples `trials` independent runs of the protocol from the pure state
/// `psi0`, each aborted at the first failed measurement.
pub fn sample_trajectories(
    p: &ModelParams,
    a: &AncillaState,
    tau: f64,
    psi0: &ComplexVector,
    n: u32,
    trials: u64,
    seed: u64,
) -> Result<TrajectorySummary, OracleError> {
    if trials < 1 {
        return Err(OracleError::InvalidInput("trials must be at least 1"));
    }
    if psi0.dim() != 4 || (psi0.norm() - 1.0).abs() > 1e-8 {
        return Err(OracleError::InvalidInput("psi0 must be a unit-norm 4-vector"));
    }
    let u = tensor_propagator(p, tau)?;
    let chi = ancilla_vector(a);
    let chunks = trials.div_ceil(TRIALS_PER_STREAM);
    let results: Vec<ChunkResult> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let size = TRIALS_PER_STREAM.min(trials - c * TRIALS_PER_STREAM);
            run_chunk(&u, &chi, psi0, n, seed, c, size)
        })
        .collect();

    let mut survivors = 0;
    let mut state_sum = ComplexMatrix::zeros(4);
    for r in &results {
        survivors += r.survivors;
        state_sum = &state_sum + &r.state_sum;
    }
    let mean_surviving_state = (survivors > 0).then(|| state_sum.scale(C64::new(1.0 / survivors as f64, 0.0)));
    Ok(TrajectorySummary {
        seed,
        trials,
        steps: n,
        survivors,
        survival_frequency: survivors as f64 / trials as f64,
        mean_surviving_state,
    })
}

/// Exact survival probability of a pure initial state, for comparison with
/// [`sample_trajectories`].
pub fn exact_pure_survival(
    p: &ModelParams,
    a: &AncillaState,
    tau: f64,
    psi0: &ComplexVector,
    n: u32,
) -> Result<f64, OracleError> {
    let rho0 = DensityMatrix::pure(psi0)?;
    Ok(run_protocol(p, a, tau, &rho0, n)?.survival_probability)
}

/// Draws a random density matrix W W†/tr from the given generator.
pub fn random_density(rng: &mut impl Rng) -> DensityMatrix {
    let w = ComplexMatrix::from_fn(4, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let m = &w * &w.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_trusted(linalg::hermitize(&m.scale(C64::new(1.0 / tr, 0.0))))
}

/// Draws a random unit-norm two-qubit state.
pub fn random_pure_state(rng: &mut impl Rng) -> ComplexVector {
    loop {
        let v = ComplexVector::from_fn(4, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        if v.norm() > 1e-3 {
            return v.normalized();
        }
    }
}
