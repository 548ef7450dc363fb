//! Witness fields over (ετ, θ/π) grids, discrepancy maps against a
//! baseline grid, and searches over the resulting fields.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{spectral_decompose, witnesses, WitnessTriple};
use crate::model::{build_hamiltonian, effective_operator_for, AncillaState, ModelParams};

/// Discrepancy class boundaries on |Δ|.
pub const MODERATE_THRESHOLD: f64 = 0.01;
pub const LARGE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid axes differ from the baseline: {0}")]
    SpecMismatch(String),
}

/// Inclusive, linearly spaced axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    fn validate(&self, name: &str) -> Result<(), SweepError> {
        if self.count < 2 {
            return Err(SweepError::InvalidGrid(format!("{name} needs at least 2 points")));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(SweepError::InvalidGrid(format!("{name} range must satisfy min < max")));
        }
        Ok(())
    }

    fn approx_eq(&self, other: &Axis) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        self.count == other.count && close(self.min, other.min) && close(self.max, other.max)
    }
}

/// A sweep over ετ (columns) and θ/π (rows) at fixed model parameters.
///
/// With ε > 0 the time step for axis value x is τ = x/ε. With ε = 0 the
/// axis is read as τ itself in raw units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub eps_tau: Axis,
    pub theta_over_pi: Axis,
    pub model: ModelParams,
    pub phi_x: f64,
}

impl GridSpec {
    pub const DEFAULT_EPS_TAU: Axis = Axis {
        min: 0.05,
        max: 12.0,
        count: 240,
    };
    pub const DEFAULT_THETA_OVER_PI: Axis = Axis {
        min: 0.01,
        max: 0.99,
        count: 196,
    };

    /// Default axes for the given model.
    pub fn with_default_axes(model: ModelParams, phi_x: f64) -> Self {
        Self {
            eps_tau: Self::DEFAULT_EPS_TAU,
            theta_over_pi: Self::DEFAULT_THETA_OVER_PI,
            model,
            phi_x,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        self.eps_tau.validate("eps_tau")?;
        self.theta_over_pi.validate("theta_over_pi")?;
        if !(self.eps_tau.min > 0.0) {
            return Err(SweepError::InvalidGrid("eps_tau min must be positive".into()));
        }
        if !(self.theta_over_pi.min > 0.0 && self.theta_over_pi.max < 1.0) {
            return Err(SweepError::InvalidGrid("theta_over_pi must lie inside (0, 1)".into()));
        }
        self.model
            .validate()
            .map_err(|e| SweepError::InvalidGrid(e.to_string()))
    }

    pub fn tau_for(&self, eps_tau: f64) -> f64 {
        if self.model.epsilon > 0.0 {
            eps_tau / self.model.epsilon
        } else {
            eps_tau
        }
    }

    pub fn cell_count(&self) -> usize {
        self.eps_tau.count * self.theta_over_pi.count
    }

    /// Row-major cell index, ετ outer and θ inner.
    pub fn index(&self, i_tau: usize, j_theta: usize) -> usize {
        i_tau * self.theta_over_pi.count + j_theta
    }

    fn same_axes(&self, other: &GridSpec) -> bool {
        self.eps_tau.approx_eq(&other.eps_tau) && self.theta_over_pi.approx_eq(&other.theta_over_pi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub eps_tau: f64,
    pub theta_over_pi: f64,
    pub witnesses: WitnessTriple,
    pub degenerate: bool,
    pub defective: bool,
    /// The cell's numerics failed; witnesses are zero.
    pub failed: bool,
}

/// Witnesses at one parameter point.
pub fn evaluate_point(model: &ModelParams, ancilla: &AncillaState, tau: f64) -> (WitnessTriple, bool, bool) {
    let h = build_hamiltonian(model);
    evaluate_with_hamiltonian(&h, ancilla, tau)
}

fn evaluate_with_hamiltonian(
    h: &crate::linalg::ComplexMatrix,
    ancilla: &AncillaState,
    tau: f64,
) -> (WitnessTriple, bool, bool) {
    let outcome = effective_operator_for(h, ancilla, tau)
        .map_err(crate::analysis::AnalysisError::from)
        .and_then(|v| spectral_decompose(&v));
    match outcome {
        Ok(sd) => (witnesses(&sd), sd.defective, false),
        Err(_) => (
            WitnessTriple {
                upsilon: 0.0,
                lambda_eff: 0.0,
                sigma: 0.0,
                degenerate_top: false,
            },
            false,
            true,
        ),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub spec: GridSpec,
    /// Indexed by [`GridSpec::index`].
    pub cells: Vec<Cell>,
}

impl SweepGrid {
    pub fn cell(&self, i_tau: usize, j_theta: usize) -> &Cell {
        &self.cells[self.spec.index(i_tau, j_theta)]
    }
}

/// Evaluates every cell of the grid on the current rayon pool.
pub fn run_sweep(spec: &GridSpec) -> Result<SweepGrid, SweepError> {
    spec.validate()?;
    let h = build_hamiltonian(&spec.model);
    let taus = spec.eps_tau.values();
    let thetas = spec.theta_over_pi.values();
    let n_theta = thetas.len();
    let cells: Vec<Cell> = (0..spec.cell_count())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n_theta, idx % n_theta);
            let ancilla = AncillaState {
                theta: thetas[j] * PI,
                phi_x: spec.phi_x,
            };
            let (w, defective, failed) = evaluate_with_hamiltonian(&h, &ancilla, spec.tau_for(taus[i]));
            Cell {
                eps_tau: taus[i],
                theta_over_pi: thetas[j],
                witnesses: w,
                degenerate: w.degenerate_top,
                defective,
                failed,
            }
        })
        .collect();
    Ok(SweepGrid { spec: *spec, cells })
}

/// [`run_sweep`] on a dedicated pool of `workers` threads.
pub fn run_sweep_with_workers(spec: &GridSpec, workers: usize) -> Result<SweepGrid, SweepError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::InvalidGrid(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscrepancyClass {
    None,
    ModerateIncrease,
    LargeIncrease,
    ModerateDecrease,
    LargeDecrease,
}

impl DiscrepancyClass {
    /// |Δ| < 0.01 is none, [0.01, 0.1) moderate, ≥ 0.1 large.
    pub fn classify(delta: f64) -> Self {
        let mag = delta.abs();
        if mag < MODERATE_THRESHOLD {
            Self::None
        } else if mag < LARGE_THRESHOLD {
            if delta > 0.0 {
                Self::ModerateIncrease
            } else {
                Self::ModerateDecrease
            }
        } else if delta > 0.0 {
            Self::LargeIncrease
        } else {
            Self::LargeDecrease
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ModerateIncrease => "moderate_increase",
            Self::LargeIncrease => "large_increase",
            Self::ModerateDecrease => "moderate_decrease",
            Self::LargeDecrease => "large_decrease",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::None,
            Self::ModerateIncrease,
            Self::LargeIncrease,
            Self::ModerateDecrease,
            Self::LargeDecrease,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for DiscrepancyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which witness a per-cell value or class refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Upsilon,
    LambdaEff,
    Sigma,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Upsilon, Quantity::LambdaEff, Quantity::Sigma];

    pub fn of(&self, w: &WitnessTriple) -> f64 {
        match self {
            Quantity::Upsilon => w.upsilon,
            Quantity::LambdaEff => w.lambda_eff,
            Quantity::Sigma => w.sigma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Upsilon => "upsilon",
            Quantity::LambdaEff => "lambda_eff",
            Quantity::Sigma => "sigma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffCell {
    /// Cell of the compared grid.
    pub cell: Cell,
    /// grid − baseline for Υ, Λ, Σ.
    pub delta: [f64; 3],
    pub class: [DiscrepancyClass; 3],
    /// Baseline cell was degenerate or defective.
    pub baseline_flagged: bool,
}

impl DiffCell {
    pub fn delta_of(&self, q: Quantity) -> f64 {
        self.delta[q as usize]
    }

    pub fn class_of(&self, q: Quantity) -> DiscrepancyClass {
        self.class[q as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffMap {
    pub spec: GridSpec,
    pub baseline_spec: GridSpec,
    pub cells: Vec<DiffCell>,
}

/// Per-cell differences `grid − baseline` with threshold classes.
pub fn diff_map(grid: &SweepGrid, baseline: &SweepGrid) -> Result<DiffMap, SweepError> {
    if !grid.spec.same_axes(&baseline.spec) {
        return Err(SweepError::SpecMismatch(format!(
            "{:?}/{:?} vs {:?}/{:?}",
            grid.spec.eps_tau, grid.spec.theta_over_pi, baseline.spec.eps_tau, baseline.spec.theta_over_pi
        )));
    }
    if grid.cells.len() != baseline.cells.len() {
        return Err(SweepError::SpecMismatch("cell counts differ".into()));
    }
    let cells = grid
        .cells
        .iter()
        .zip(&baseline.cells)
        .map(|(g, b)| {
            let delta = Quantity::ALL.map(|q| q.of(&g.witnesses) - q.of(&b.witnesses));
            DiffCell {
                cell: *g,
                delta,
                class: delta.map(DiscrepancyClass::classify),
                baseline_flagged: b.degenerate || b.defective || b.failed,
            }
        })
        .collect();
    Ok(DiffMap {
        spec: grid.spec,
        baseline_spec: baseline.spec,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalPoint {
    pub eps_tau: f64,
    pub theta_over_pi: f64,
    pub witnesses: WitnessTriple,
}

/// Non-degenerate cells with Υ ≥ `min_upsilon` and Σ ≥ `min_sigma`, by
/// descending Λ.
pub fn find_optimal_points(grid: &SweepGrid, min_upsilon: f64, min_sigma: f64) -> Vec<OptimalPoint> {
    let mut points: Vec<OptimalPoint> = grid
        .cells
        .iter()
        .filter(|c| !c.degenerate && !c.failed)
        .filter(|c| c.witnesses.upsilon >= min_upsilon && c.witnesses.sigma >= min_sigma)
        .map(|c| OptimalPoint {
            eps_tau: c.eps_tau,
            theta_over_pi: c.theta_over_pi,
            witnesses: c.witnesses,
        })
        .collect();
    points.sort_by(|a, b| b.witnesses.lambda_eff.total_cmp(&a.witnesses.lambda_eff));
    points
}

/// Fraction of cells whose efficiency is below `cutoff`.
pub fn efficiency_collapse_fraction(grid: &SweepGrid, cutoff: f64) -> f64 {
    let below = grid
        .cells
        .iter()
        .filter(|c| c.witnesses.lambda_eff < cutoff)
        .count();
    below as f64 / grid.cells.len() as f64
}
