//! Command execution for a parsed [`RunConfig`].

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{evolve_conditional, spectral_decompose, DensityMatrix};
use crate::config::{Baseline, Command, RunConfig};
use crate::emit::{self, fmt_real, EmitError, Metadata};
use crate::model::{effective_operator, AncillaState};
use crate::oracle::{self, OracleError};
use crate::perturbation::{verify_order, PerturbationError};
use crate::sweep::{diff_map, evaluate_point, run_sweep, Cell, Quantity, SweepError, SweepGrid};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Emit(#[from] EmitError),
}

impl RunError {
    /// 1 for usage errors, 2 for numerical failures, 2 for unwritable output.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Numerical(_) | RunError::Emit(_) => 2,
        }
    }
}

impl From<OracleError> for RunError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::InvalidInput(m) => RunError::Usage(m.to_string()),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<SweepError> for RunError {
    fn from(e: SweepError) -> Self {
        RunError::Usage(e.to_string())
    }
}

impl From<PerturbationError> for RunError {
    fn from(e: PerturbationError) -> Self {
        match e {
            PerturbationError::InvalidRegime { .. } => RunError::Usage(e.to_string()),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

fn metadata(cfg: &RunConfig, seeded: bool) -> Metadata {
    Metadata::new(
        &cfg.canonical_command_line(),
        &cfg.model,
        seeded.then_some(cfg.seed),
    )
}

fn ancilla(cfg: &RunConfig) -> Result<AncillaState, RunError> {
    AncillaState::new(cfg.theta_over_pi * PI, cfg.phi_x).map_err(|e| RunError::Usage(e.to_string()))
}

/// Writes to the configured path or to `stdout` when none is set.
fn emit_text(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> Result<(), EmitError>,
) -> Result<(), RunError> {
    match path {
        Some(p) => emit::write_file(p, f)?,
        None => f(stdout)?,
    }
    Ok(())
}

fn csv_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.output.as_ref().map(|p| p.with_extension("csv"))
}

/// `<stem>_<quantity>.ppm` next to the output path.
pub fn ppm_path(output: &Path, q: Quantity) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}_{}.ppm", q.name()))
}

fn quantities(cfg: &RunConfig) -> Vec<Quantity> {
    cfg.quantity.map_or(Quantity::ALL.to_vec(), |q| vec![q])
}

/// Runs one command. Parallel work uses the current rayon pool.
pub fn execute(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), RunError> {
    match cfg.command {
        Command::Point => point(cfg, stdout),
        Command::Sweep => sweep(cfg, stdout),
        Command::Diff => diff(cfg, stdout),
        Command::Perturb => perturb(cfg, stdout),
        Command::OracleCheck => oracle_check(cfg, stdout),
        Command::Trajectories => trajectories(cfg, stdout),
    }
}

fn point(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), RunError> {
    let (w, defective, failed) = evaluate_point(&cfg.model, &ancilla(cfg)?, cfg.tau());
    if failed {
        return Err(RunError::Numerical("eigendecomposition failed at this point".into()));
    }
    let cell = Cell {
        eps_tau: cfg.eps_tau,
        theta_over_pi: cfg.theta_over_pi,
        witnesses: w,
        degenerate: w.degenerate_top,
        defective,
        failed,
    };
    let meta = metadata(cfg, false);
    emit_text(csv_path(cfg).as_deref(), stdout, |w| emit::write_grid_csv(w, &meta, &[cell]))
}

fn warn_failed(grid: &SweepGrid) {
    let failed = grid.cells.iter().filter(|c| c.failed).count();
    if failed > 0 {
        eprintln!("warning: {failed} cells failed and are reported as defective");
    }
}

fn sweep(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), RunError> {
    let grid = run_sweep(&cfg.grid)?;
    warn_failed(&grid);
    let meta = metadata(cfg, false);
    if cfg.format.wants_csv() {
        emit_text(csv_path(cfg).as_deref(), stdout, |w| emit::write_grid_csv(w, &meta, &grid.cells))?;
    }
    if cfg.format.wants_ppm() {
        let out = cfg.output.as_ref().ok_or_else(|| RunError::Usage("PPM output needs a path".into()))?;
        for q in quantities(cfg) {
            emit::write_file(&ppm_path(out, q), |w| emit::write_grid_ppm(w, &meta, &grid, q))?;
        }
    }
    Ok(())
}

fn diff(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), RunError> {
    let grid = run_sweep(&cfg.grid)?;
    let mut meta = metadata(cfg, false);
    let baseline = match &cfg.baseline {
        Baseline::Model(m) => {
            meta.push(format!(
                "baseline: omega={} epsilon={} eta={} phi_eta={}",
                m.omega, m.epsilon, m.eta, m.phi_eta
            ));
            run_sweep(&crate::sweep::GridSpec { model: *m, ..cfg.grid })?
        }
        Baseline::Csv(path) => {
            let f = File::open(path).map_err(|e| RunError::Usage(format!("cannot open baseline {}: {e}", path.display())))?;
            emit::read_grid_csv(f, cfg.model, cfg.phi_x)
                .map_err(|e| RunError::Usage(format!("baseline {}: {e}", path.display())))?
        }
    };
    warn_failed(&grid);
    let d = diff_map(&grid, &baseline)?;
    if cfg.format.wants_csv() {
        emit_text(csv_path(cfg).as_deref(), stdout, |w| emit::write_diff_csv(w, &meta, &d))?;
    }
    if cfg.format.wants_ppm() {
        let out = cfg.output.as_ref().ok_or_else(|| RunError::Usage("PPM output needs a path".into()))?;
        for q in quantities(cfg) {
            emit::write_file(&ppm_path(out, q), |w| emit::write_diff_ppm(w, &meta, &d, q))?;
        }
    }
    Ok(())
}

fn perturb(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), RunError> {
    let report = verify_order(&cfg.model, cfg.regime)?;
    let mut meta = metadata(cfg, false);
    meta.push(format!("regime: {}", cfg.regime));
    meta.push(format!("max_residual: {}", fmt_real(report.max_residual)));
    meta.push(format!("min_spacing: {}", fmt_real(report.min_spacing)));
    emit_text(csv_path(cfg).as_deref(), stdout, |w| {
        meta.lines.iter().try_for_each(|l| writeln!(w, "# {l}"))?;
        writeln!(w, "label,zeroth_order,first_order,predicted,exact,residual,overlap_deficit")?;
        for m in &report.matches {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.level.label,
                fmt_real(m.level.zeroth_order),
                fmt_real(m.level.first_order),
                fmt_real(m.level.predicted()),
                fmt_real(m.exact),
                fmt_real(m.residual()),
                fmt_real(m.overlap_deficit())
            )?;
        }
        Ok(())
    })
}

/// Initial states of the seeded commands are drawn from this stream so they
/// never overlap the trajectory streams.
const INITIAL_STATE_STREAM: u64 = u64::MAX;

fn initial_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INITIAL_STATE_STREAM);
    rng
}

fn oracle_check(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), RunError> {
    let a = ancilla(cfg)?;
    let tau = cfg.tau();
    let rho0 = oracle::random_density(&mut initial_rng(cfg.seed));
    let full = oracle::run_protocol(&cfg.model, &a, tau, &rho0, cfg.n_steps)?;
    let v = effective_operator(&cfg.model, &a, tau).map_err(|e| RunError::Numerical(e.to_string()))?;
    let reduced = evolve_conditional(&v, &rho0, cfg.n_steps);
    let p_eff = reduced.trace();
    let rel_err = (full.survival_probability - p_eff).abs() / full.survival_probability;
    let state_diff = full
        .conditional_state
        .matrix()
        .max_abs_diff(reduced.normalized().matrix());
    let sd = spectral_decompose(&v).map_err(|e| RunError::Numerical(e.to_string()))?;

    let meta = metadata(cfg, true);
    emit_text(csv_path(cfg).as_deref(), stdout, |w| {
        meta.lines.iter().try_for_each(|l| writeln!(w, "# {l}"))?;
        writeln!(w, "steps,survival_full,survival_effective,relative_error,state_max_diff,degenerate,defective")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            cfg.n_steps,
            fmt_real(full.survival_probability),
            fmt_real(p_eff),
            fmt_real(rel_err),
            fmt_real(state_diff),
            u8::from(sd.degenerate_top),
            u8::from(sd.defective)
        )?;
        Ok(())
    })
}

fn trajectories(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), RunError> {
    let a = ancilla(cfg)?;
    let tau = cfg.tau();
    let psi0 = oracle::random_pure_state(&mut initial_rng(cfg.seed));
    let summary = oracle::sample_trajectories(&cfg.model, &a, tau, &psi0, cfg.n_steps, cfg.trials, cfg.seed)?;
    let exact = oracle::exact_pure_survival(&cfg.model, &a, tau, &psi0, cfg.n_steps)?;
    let sigma = (exact * (1.0 - exact) / cfg.trials as f64).sqrt();
    let z = if sigma > 0.0 {
        (summary.survival_frequency - exact) / sigma
    } else {
        0.0
    };

    let meta = metadata(cfg, true);
    emit_text(csv_path(cfg).as_deref(), stdout, |w| {
        meta.lines.iter().try_for_each(|l| writeln!(w, "# {l}"))?;
        writeln!(w, "trials,steps,survivors,survival_frequency,exact_survival,binomial_sigma,z_score")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            summary.trials,
            summary.steps,
            summary.survivors,
            fmt_real(summary.survival_frequency),
            fmt_real(exact),
            fmt_real(sigma),
            fmt_real(z)
        )?;
        Ok(())
    })
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Emit(EmitError::Io(e))
    }
}

/// Density of the initial state used by `oracle-check` for `seed`.
pub fn oracle_check_initial_state(seed: u64) -> DensityMatrix {
    oracle::random_density(&mut initial_rng(seed))
}
