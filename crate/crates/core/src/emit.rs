//! CSV and binary PPM writers for sweeps, diff maps and point results,
//! plus a reader for sweep CSVs used as diff baselines.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::analysis::WitnessTriple;
use crate::model::ModelParams;
use crate::sweep::{Axis, Cell, DiffMap, DiscrepancyClass, GridSpec, Quantity, SweepGrid};

pub const ARTIFACT_VERSION: &str = concat!("purify ", env!("CARGO_PKG_VERSION"));

pub const GRID_HEADER: [&str; 7] = [
    "eps_tau",
    "theta_over_pi",
    "upsilon",
    "lambda_eff",
    "sigma",
    "degenerate",
    "defective",
];

pub const DIFF_EXTRA_HEADER: [&str; 6] = [
    "d_upsilon",
    "d_lambda",
    "d_sigma",
    "class_upsilon",
    "class_lambda",
    "class_sigma",
];

#[derive(Debug, Error)]
pub enum EmitError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed CSV: {0}")]
    Malformed(String),
}

/// Comment lines written at the top of every artifact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    pub lines: Vec<String>,
}

impl Metadata {
    pub fn new(command_line: &str, model: &ModelParams, seed: Option<u64>) -> Self {
        let mut lines = vec![
            format!("artifact: {ARTIFACT_VERSION}"),
            format!("command: {command_line}"),
            format!(
                "params: omega={} epsilon={} eta={} phi_eta={}",
                model.omega, model.epsilon, model.eta, model.phi_eta
            ),
        ];
        if let Some(s) = seed {
            lines.push(format!("seed: {s}"));
        }
        Self { lines }
    }

    pub fn push(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    fn write_hashed(&self, w: &mut impl Write) -> std::io::Result<()> {
        for line in &self.lines {
            writeln!(w, "# {line}")?;
        }
        Ok(())
    }
}

/// 12 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.11e}")
}

fn fmt_flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn cell_fields(c: &Cell) -> Vec<String> {
    vec![
        fmt_real(c.eps_tau),
        fmt_real(c.theta_over_pi),
        fmt_real(c.witnesses.upsilon),
        fmt_real(c.witnesses.lambda_eff),
        fmt_real(c.witnesses.sigma),
        fmt_flag(c.degenerate).into(),
        // failed cells are reported as defective
        fmt_flag(c.defective || c.failed).into(),
    ]
}

/// Writes metadata, header and one row per cell. Cells are stored with ετ
/// outer and θ inner, which is the row order.
pub fn write_grid_csv(mut w: impl Write, meta: &Metadata, cells: &[Cell]) -> Result<(), EmitError> {
    meta.write_hashed(&mut w)?;
    let mut out = csv_writer(&mut w);
    out.write_record(GRID_HEADER)?;
    for c in cells {
        out.write_record(cell_fields(c))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_diff_csv(mut w: impl Write, meta: &Metadata, diff: &DiffMap) -> Result<(), EmitError> {
    meta.write_hashed(&mut w)?;
    let mut out = csv_writer(&mut w);
    out.write_record(GRID_HEADER.iter().chain(DIFF_EXTRA_HEADER.iter()))?;
    for d in &diff.cells {
        let mut row = cell_fields(&d.cell);
        row.extend(d.delta.iter().map(|&x| fmt_real(x)));
        row.extend(d.class.iter().map(|c| c.as_str().to_string()));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes with a buffered file, creating parent directories.
pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), EmitError>) -> Result<(), EmitError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// One parsed row of a sweep or diff CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub cell: Cell,
    pub delta: Option<[f64; 3]>,
    pub class: Option<[DiscrepancyClass; 3]>,
}

fn parse_real(s: &str, line: u64) -> Result<f64, EmitError> {
    s.parse::<f64>()
        .map_err(|_| EmitError::Malformed(format!("line {line}: `{s}` is not a number")))
}

fn parse_flag(s: &str, line: u64) -> Result<bool, EmitError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(EmitError::Malformed(format!("line {line}: `{s}` is not a 0/1 flag"))),
    }
}

/// Reads the rows of a sweep or diff CSV, skipping `#` lines.
pub fn read_csv_rows(r: impl Read) -> Result<(Vec<CsvRow>, Vec<String>), EmitError> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    let meta: Vec<String> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .collect();

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let is_diff = header.len() == GRID_HEADER.len() + DIFF_EXTRA_HEADER.len();
    let expected: Vec<&str> = if is_diff {
        GRID_HEADER.iter().chain(DIFF_EXTRA_HEADER.iter()).copied().collect()
    } else {
        GRID_HEADER.to_vec()
    };
    if header != expected {
        return Err(EmitError::Malformed(format!("unexpected header {header:?}")));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let real = |i: usize| parse_real(&record[i], line);
        let degenerate = parse_flag(&record[5], line)?;
        let cell = Cell {
            eps_tau: real(0)?,
            theta_over_pi: real(1)?,
            witnesses: WitnessTriple {
                upsilon: real(2)?,
                lambda_eff: real(3)?,
                sigma: real(4)?,
                degenerate_top: degenerate,
            },
            degenerate,
            defective: parse_flag(&record[6], line)?,
            failed: false,
        };
        let (delta, class) = if is_diff {
            let class = |i: usize| {
                DiscrepancyClass::parse(&record[i])
                    .ok_or_else(|| EmitError::Malformed(format!("line {line}: unknown class `{}`", &record[i])))
            };
            (
                Some([real(7)?, real(8)?, real(9)?]),
                Some([class(10)?, class(11)?, class(12)?]),
            )
        } else {
            (None, None)
        };
        rows.push(CsvRow { cell, delta, class });
    }
    Ok((rows, meta))
}

/// Rebuilds a [`SweepGrid`] from a sweep CSV. Axes are recovered from the
/// distinct coordinate values; `model` and `phi_x` are attached as given.
pub fn read_grid_csv(r: impl Read, model: ModelParams, phi_x: f64) -> Result<SweepGrid, EmitError> {
    let (rows, _) = read_csv_rows(r)?;
    if rows.is_empty() {
        return Err(EmitError::Malformed("no data rows".into()));
    }
    let mut taus: Vec<f64> = rows.iter().map(|r| r.cell.eps_tau).collect();
    let mut thetas: Vec<f64> = rows.iter().map(|r| r.cell.theta_over_pi).collect();
    for v in [&mut taus, &mut thetas] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    if taus.len() < 2 || thetas.len() < 2 || taus.len() * thetas.len() != rows.len() {
        return Err(EmitError::Malformed(format!(
            "{} rows do not form a {}×{} grid",
            rows.len(),
            taus.len(),
            thetas.len()
        )));
    }
    for (k, row) in rows.iter().enumerate() {
        let (i, j) = (k / thetas.len(), k % thetas.len());
        if row.cell.eps_tau != taus[i] || row.cell.theta_over_pi != thetas[j] {
            return Err(EmitError::Malformed(format!("row {} is out of grid order", k + 1)));
        }
    }
    let axis = |v: &[f64]| Axis::new(v[0], v[v.len() - 1], v.len());
    Ok(SweepGrid {
        spec: GridSpec {
            eps_tau: axis(&taus),
            theta_over_pi: axis(&thetas),
            model,
            phi_x,
        },
        cells: rows.into_iter().map(|r| r.cell).collect(),
    })
}

/// White at 0, dark blue (0, 0, 139) at 1; inputs are clamped to [0, 1].
pub fn witness_color(v: f64) -> [u8; 3] {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let c = (255.0 * (1.0 - v)).round() as u8;
    [c, c, (255.0 - 116.0 * v).round() as u8]
}

pub fn class_color(c: DiscrepancyClass) -> [u8; 3] {
    match c {
        DiscrepancyClass::None => [255, 255, 255],
        DiscrepancyClass::ModerateIncrease => [173, 216, 230],
        DiscrepancyClass::LargeIncrease => [0, 0, 139],
        DiscrepancyClass::ModerateDecrease => [255, 182, 193],
        DiscrepancyClass::LargeDecrease => [139, 0, 0],
    }
}

/// P6 image, one pixel per cell: x follows ετ, and the top row holds the
/// largest θ.
fn write_ppm_pixels(
    mut w: impl Write,
    meta: &Metadata,
    spec: &GridSpec,
    pixel: impl Fn(usize) -> [u8; 3],
) -> Result<(), EmitError> {
    let (width, height) = (spec.eps_tau.count, spec.theta_over_pi.count);
    writeln!(w, "P6")?;
    meta.write_hashed(&mut w)?;
    writeln!(w, "{width} {height}")?;
    writeln!(w, "255")?;
    let mut data = Vec::with_capacity(width * height * 3);
    for row in 0..height {
        let j = height - 1 - row;
        for i in 0..width {
            data.extend_from_slice(&pixel(spec.index(i, j)));
        }
    }
    w.write_all(&data)?;
    Ok(())
}

pub fn write_grid_ppm(w: impl Write, meta: &Metadata, grid: &SweepGrid, q: Quantity) -> Result<(), EmitError> {
    let mut meta = meta.clone();
    meta.push(format!("quantity: {}", q.name()));
    write_ppm_pixels(w, &meta, &grid.spec, |k| witness_color(q.of(&grid.cells[k].witnesses)))
}

pub fn write_diff_ppm(w: impl Write, meta: &Metadata, diff: &DiffMap, q: Quantity) -> Result<(), EmitError> {
    let mut meta = meta.clone();
    meta.push(format!("quantity: class_{}", q.name()));
    write_ppm_pixels(w, &meta, &diff.spec, |k| class_color(diff.cells[k].class_of(q)))
}

/// Parsed P6 image with its comment lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub comments: Vec<String>,
    pub pixels: Vec<[u8; 3]>,
}

impl Ppm {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Reads the P6 layout produced by the writers in this module.
pub fn read_ppm(bytes: &[u8]) -> Result<Ppm, EmitError> {
    let bad = |m: &str| EmitError::Malformed(format!("PPM: {m}"));
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<String, EmitError> {
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        let line = String::from_utf8_lossy(&bytes[*pos..*pos + end]).into_owned();
        *pos += end + 1;
        Ok(line)
    };
    if next_line(&mut pos)? != "P6" {
        return Err(bad("missing P6 magic"));
    }
    let mut comments = Vec::new();
    let dims = loop {
        let line = next_line(&mut pos)?;
        match line.strip_prefix('#') {
            Some(c) => comments.push(c.trim().to_string()),
            None => break line,
        }
    };
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (width, height) = match (it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h))) => (w, h),
        _ => return Err(bad("bad dimensions")),
    };
    if next_line(&mut pos)? != "255" {
        return Err(bad("max value must be 255"));
    }
    let data = &bytes[pos..];
    if data.len() != width * height * 3 {
        return Err(bad("pixel data length mismatch"));
    }
    Ok(Ppm {
        width,
        height,
        comments,
        pixels: data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}
