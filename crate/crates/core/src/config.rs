//! Run configuration from command-line flags and an optional `key = value`
//! file. Flags override file values; every value is range-checked before
//! anything runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use clap::{Arg, ArgAction};
use thiserror::Error;

use crate::model::ModelParams;
use crate::perturbation::Regime;
use crate::sweep::{Axis, GridSpec, Quantity};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    /// Invalid or unknown key, or a value outside its accepted range.
    Usage { key: String, message: String },
    /// `--help` or `--version` was requested; the payload is the text.
    Display(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Usage { key, message } if key.is_empty() => write!(f, "usage error: {message}"),
            ConfigError::Usage { key, message } => write!(f, "usage error in `{key}`: {message}"),
            ConfigError::Display(text) => f.write_str(text),
        }
    }
}

impl std::error::Error for ConfigError {}

fn usage(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Usage {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Point,
    Sweep,
    Diff,
    Perturb,
    OracleCheck,
    Trajectories,
}

impl Command {
    const ALL: [Command; 6] = [
        Command::Point,
        Command::Sweep,
        Command::Diff,
        Command::Perturb,
        Command::OracleCheck,
        Command::Trajectories,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Point => "point",
            Command::Sweep => "sweep",
            Command::Diff => "diff",
            Command::Perturb => "perturb",
            Command::OracleCheck => "oracle-check",
            Command::Trajectories => "trajectories",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// ω/ε, η/ε with ε = 1.
    Epsilon,
    /// ω, ε, η as given.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Ppm,
    Both,
}

impl Format {
    pub fn wants_csv(&self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn wants_ppm(&self) -> bool {
        matches!(self, Format::Ppm | Format::Both)
    }
}

/// Reference grid for `diff`.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    /// Recompute with the same parameters except η and φ_η.
    Model(ModelParams),
    /// Load a previously emitted sweep CSV.
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub units: Units,
    pub model: ModelParams,
    pub theta_over_pi: f64,
    pub phi_x: f64,
    /// ετ for single-point commands (τ itself when ε = 0).
    pub eps_tau: f64,
    pub grid: GridSpec,
    pub baseline: Baseline,
    pub regime: Regime,
    pub n_steps: u32,
    pub trials: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    /// PPM quantity; `None` renders all three.
    pub quantity: Option<Quantity>,
    /// Resolved settings in canonical order, for artifact metadata.
    pub settings: Vec<(String, String)>,
}

impl RunConfig {
    /// Time step τ of the single-point commands.
    pub fn tau(&self) -> f64 {
        self.grid.tau_for(self.eps_tau)
    }

    /// Reconstructed command line with every resolved setting except the
    /// output location.
    pub fn canonical_command_line(&self) -> String {
        let mut s = format!("purify {}", self.command.name());
        for (k, v) in &self.settings {
            s.push_str(&format!(" --{k} {v}"));
        }
        s
    }
}

struct Key {
    name: &'static str,
    help: &'static str,
}

const KEYS: &[Key] = &[
    Key { name: "units", help: "parameter convention: epsilon (default) or raw" },
    Key { name: "omega-over-eps", help: "ω/ε [default 2]" },
    Key { name: "eta-over-eps", help: "η/ε ≥ 0 [default 0]" },
    Key { name: "omega", help: "ω in raw units" },
    Key { name: "epsilon", help: "ε ≥ 0 in raw units" },
    Key { name: "eta", help: "η ≥ 0 in raw units" },
    Key { name: "phi-eta", help: "phase φ_η of the direct coupling [default 0]" },
    Key { name: "theta-over-pi", help: "ancilla angle θ/π in (0, 1) [default 0.25]" },
    Key { name: "phi-x", help: "ancilla phase φ_X [default 0]" },
    Key { name: "eps-tau", help: "ετ > 0 for single-point commands [default 2]" },
    Key { name: "tau-min", help: "smallest ετ of the grid [default 0.05]" },
    Key { name: "tau-max", help: "largest ετ of the grid [default 12]" },
    Key { name: "tau-count", help: "ετ points ≥ 2 [default 240]" },
    Key { name: "theta-min", help: "smallest θ/π of the grid [default 0.01]" },
    Key { name: "theta-max", help: "largest θ/π of the grid [default 0.99]" },
    Key { name: "theta-count", help: "θ/π points ≥ 2 [default 196]" },
    Key { name: "baseline-eta-over-eps", help: "η/ε of the diff baseline [default 0]" },
    Key { name: "baseline-phi-eta", help: "φ_η of the diff baseline [default phi-eta]" },
    Key { name: "baseline-eta", help: "η of the diff baseline in raw units [default 0]" },
    Key { name: "baseline-csv", help: "load the diff baseline from a sweep CSV" },
    Key { name: "regime", help: "perturbation regime: weak (default) or strong" },
    Key { name: "n-steps", help: "measurement rounds ≥ 1 [default 20]" },
    Key { name: "trials", help: "trajectory count ≥ 1 [default 100000]" },
    Key { name: "seed", help: "random seed [default 0]" },
    Key { name: "output", help: "output path; stdout for CSV when absent" },
    Key { name: "format", help: "csv (default), ppm or both" },
    Key { name: "quantity", help: "PPM field: upsilon, lambda_eff or sigma [default all]" },
];

const RAW_ONLY: [&str; 4] = ["omega", "epsilon", "eta", "baseline-eta"];
const EPSILON_ONLY: [&str; 3] = ["omega-over-eps", "eta-over-eps", "baseline-eta-over-eps"];

fn cli() -> clap::Command {
    let mut cmd = clap::Command::new("purify")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Repeated-measurement purification of two qubits via a measured ancilla")
        .arg(
            Arg::new("command")
                .value_name("COMMAND")
                .help("point | sweep | diff | perturb | oracle-check | trajectories"),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("`key = value` file; flags take precedence"),
        );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(key.name)
                .long(key.name)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .allow_hyphen_values(true)
                .help(key.help),
        );
    }
    cmd
}

/// Parses a `key = value` file. Blank lines and `#` comments are skipped;
/// `command` is accepted alongside the flag keys.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage("config", format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = k.trim().replace('_', "-");
        if key != "command" && !KEYS.iter().any(|known| known.name == key) {
            return Err(usage(&key, format!("unknown key on line {}", lineno + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Builds a [`RunConfig`] from `argv` (program name first), reading the
/// `--config` file if one is given.
pub fn parse_config<I, S>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let matches = cli().try_get_matches_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            ConfigError::Display(e.to_string())
        }
        _ => usage("", e.to_string().trim_end().to_string()),
    })?;

    let mut values = match matches.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage("config", format!("cannot read {path}: {e}")))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    if let Some(c) = matches.get_one::<String>("command") {
        values.insert("command".into(), c.clone());
    }
    for key in KEYS {
        if let Some(v) = matches.get_one::<String>(key.name) {
            values.insert(key.name.to_string(), v.clone());
        }
    }
    resolve(&values)
}

struct Lookup<'a> {
    values: &'a BTreeMap<String, String>,
    settings: Vec<(String, String)>,
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn record(&mut self, key: &str, value: String) {
        self.settings.push((key.to_string(), value));
    }

    fn real(&mut self, key: &str, default: f64, range: &str, ok: impl Fn(f64) -> bool) -> Result<f64, ConfigError> {
        let v = match self.raw(key) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| usage(key, format!("`{s}` is not a number; accepted range {range}")))?,
            None => default,
        };
        if !(v.is_finite() && ok(v)) {
            return Err(usage(key, format!("{v} is outside the accepted range {range}")));
        }
        self.record(key, format!("{v}"));
        Ok(v)
    }

    fn integer(&mut self, key: &str, default: u64, min: u64, max: u64) -> Result<u64, ConfigError> {
        let range = format!("[{min}, {max}]");
        let v = match self.raw(key) {
            Some(s) => s
                .parse::<u64>()
                .map_err(|_| usage(key, format!("`{s}` is not an integer; accepted range {range}")))?,
            None => default,
        };
        if v < min || v > max {
            return Err(usage(key, format!("{v} is outside the accepted range {range}")));
        }
        self.record(key, v.to_string());
        Ok(v)
    }

    fn choice<T: Copy>(&mut self, key: &str, default: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
        let s = self.raw(key).unwrap_or(default).to_string();
        let found = options.iter().find(|(name, _)| *name == s).map(|(_, v)| *v);
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        let v = found.ok_or_else(|| usage(key, format!("`{s}` is not one of {}", names.join(", "))))?;
        self.record(key, s);
        Ok(v)
    }
}

fn resolve(values: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let command_name = values
        .get("command")
        .ok_or_else(|| usage("command", "missing command; expected one of point, sweep, diff, perturb, oracle-check, trajectories"))?;
    let command = Command::parse(command_name)
        .ok_or_else(|| usage("command", format!("unknown command `{command_name}`")))?;

    let mut l = Lookup {
        values,
        settings: Vec::new(),
    };
    let units = l.choice("units", "epsilon", &[("epsilon", Units::Epsilon), ("raw", Units::Raw)])?;
    let (foreign, mode) = match units {
        Units::Epsilon => (&RAW_ONLY[..], "epsilon"),
        Units::Raw => (&EPSILON_ONLY[..], "raw"),
    };
    if let Some(k) = foreign.iter().find(|k| values.contains_key(**k)) {
        return Err(usage(k, format!("not accepted with units = {mode}")));
    }

    let any = |_: f64| true;
    let non_negative = |v: f64| v >= 0.0;
    let (omega, epsilon, eta) = match units {
        Units::Epsilon => (
            l.real("omega-over-eps", 2.0, "(-inf, inf)", any)?,
            1.0,
            l.real("eta-over-eps", 0.0, "[0, inf)", non_negative)?,
        ),
        Units::Raw => (
            l.real("omega", 2.0, "(-inf, inf)", any)?,
            l.real("epsilon", 1.0, "[0, inf)", non_negative)?,
            l.real("eta", 0.0, "[0, inf)", non_negative)?,
        ),
    };
    let phi_eta = l.real("phi-eta", 0.0, "(-inf, inf)", any)?;
    let model = ModelParams::new(omega, epsilon, eta, phi_eta).map_err(|e| usage("model", e.to_string()))?;

    let unit_open = |v: f64| v > 0.0 && v < 1.0;
    let positive = |v: f64| v > 0.0;
    let theta_over_pi = l.real("theta-over-pi", 0.25, "(0, 1)", unit_open)?;
    let phi_x = l.real("phi-x", 0.0, "(-inf, inf)", any)?;
    let eps_tau = l.real("eps-tau", 2.0, "(0, inf)", positive)?;

    let d_tau = GridSpec::DEFAULT_EPS_TAU;
    let d_theta = GridSpec::DEFAULT_THETA_OVER_PI;
    let tau_min = l.real("tau-min", d_tau.min, "(0, inf)", positive)?;
    let tau_max = l.real("tau-max", d_tau.max, "(tau-min, inf)", |v| v > tau_min)?;
    let tau_count = l.integer("tau-count", d_tau.count as u64, 2, 100_000)?;
    let theta_min = l.real("theta-min", d_theta.min, "(0, 1)", unit_open)?;
    let theta_max = l.real("theta-max", d_theta.max, "(theta-min, 1)", |v| unit_open(v) && v > theta_min)?;
    let theta_count = l.integer("theta-count", d_theta.count as u64, 2, 100_000)?;
    let grid = GridSpec {
        eps_tau: Axis::new(tau_min, tau_max, tau_count as usize),
        theta_over_pi: Axis::new(theta_min, theta_max, theta_count as usize),
        model,
        phi_x,
    };

    let baseline = if command == Command::Diff {
        match values.get("baseline-csv") {
            Some(path) => {
                l.record("baseline-csv", path.clone());
                Baseline::Csv(PathBuf::from(path))
            }
            None => {
                let eta = match units {
                    Units::Epsilon => l.real("baseline-eta-over-eps", 0.0, "[0, inf)", non_negative)?,
                    Units::Raw => l.real("baseline-eta", 0.0, "[0, inf)", non_negative)?,
                };
                let phi = l.real("baseline-phi-eta", phi_eta, "(-inf, inf)", any)?;
                Baseline::Model(ModelParams { eta, phi_eta: phi, ..model })
            }
        }
    } else {
        Baseline::Model(ModelParams { eta: 0.0, ..model })
    };

    let regime = l.choice("regime", "weak", &[("weak", Regime::Weak), ("strong", Regime::Strong)])?;
    let n_steps = l.integer("n-steps", 20, 1, u32::MAX as u64)? as u32;
    let trials = l.integer("trials", 100_000, 1, u64::MAX)?;
    let seed = l.integer("seed", 0, 0, u64::MAX)?;
    let format = l.choice(
        "format",
        "csv",
        &[("csv", Format::Csv), ("ppm", Format::Ppm), ("both", Format::Both)],
    )?;
    let quantity = match values.get("quantity") {
        Some(q) => {
            let parsed = Quantity::parse(q)
                .ok_or_else(|| usage("quantity", format!("`{q}` is not one of upsilon, lambda_eff, sigma")))?;
            l.record("quantity", q.clone());
            Some(parsed)
        }
        None => None,
    };
    let output = values.get("output").map(PathBuf::from);

    if format.wants_ppm() {
        if !matches!(command, Command::Sweep | Command::Diff) {
            return Err(usage("format", format!("PPM output is only available for sweep and diff, not {}", command.name())));
        }
        if output.is_none() {
            return Err(usage("output", "PPM output needs an output path"));
        }
    }

    Ok(RunConfig {
        command,
        units,
        model,
        theta_over_pi,
        phi_x,
        eps_tau,
        grid,
        baseline,
        regime,
        n_steps,
        trials,
        seed,
        output,
        format,
        quantity,
        settings: l.settings,
    })
}

#[derive(Debug, Error)]
#[error("invalid worker count `{0}` in PURIFY_WORKERS")]
pub struct WorkerCountError(pub String);

/// Worker count from `PURIFY_WORKERS`, or the available parallelism.
pub fn worker_count() -> Result<usize, WorkerCountError> {
    match std::env::var("PURIFY_WORKERS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(WorkerCountError(s)),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
