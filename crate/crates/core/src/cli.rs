//! Command-line front end: `check`, `curvature`, `legendre` and `report`.
//!
//! Exit codes: 0 when every check passes, 1 when some check fails, 2 for
//! model or input errors (including malformed arguments), 3 for points
//! outside the model domain.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::geometry::{
    codazzi_residual, euler_defect, gibbs_duhem_residual, hessian_metric, kernel, psd_check,
};
use crate::linalg::{symmetric_eigen, Mat};
use crate::models::{builtin, load_model_file, PotentialModel};
use crate::submanifold::{
    curvature_at, dual_coordinates, dual_potential, legendre_invariance_residual, make_slice,
    SliceSpec,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Caps the worker pool used by `curvature`.
pub const THREADS_ENV: &str = "HESSIOMETRIC_THREADS";
/// Scale factors for the Euler-defect spread.
const EULER_SCALES: [f64; 3] = [1.0, 1.25, 2.0];
/// Per-coordinate values of the `report` lattice.
const REPORT_LATTICE: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Parser)]
#[command(
    name = "hessiometric",
    version,
    about = "Probe degenerate Hessian structures of thermodynamic potentials"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run psd, kernel, gibbs_duhem, euler_defect and codazzi at each point.
    Check {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        points: PointArgs,
    },
    /// Scalar curvature of a linear slice over a coordinate grid, as CSV.
    Curvature {
        #[command(flatten)]
        common: Common,
        /// Constraint rows `b1,..,bn=c`, separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        slice: String,
        /// Slice-coordinate ranges `lo:hi:count`, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dual potential, dual coordinates and Legendre invariance at slice points.
    Legendre {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        slice: String,
        #[command(flatten)]
        points: PointArgs,
        /// Tolerance for the Legendre invariance residual.
        #[arg(long, default_value_t = 1e-6)]
        tol_legendre: f64,
    },
    /// `check` over a 3^n lattice of domain points, printed as a table.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model JSON file, or `builtin:NAME`.
    pub model: String,
    /// Relative spectral tolerance for rank and sign decisions.
    #[arg(long, default_value_t = 1e-9)]
    pub tol_rank: f64,
    /// Tolerance for residual checks.
    #[arg(long, default_value_t = 1e-8)]
    pub tol_check: f64,
    /// Omit the run timestamp so repeated runs are byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// Comma-separated coordinates; repeatable.
    #[arg(long = "point", allow_hyphen_values = true)]
    pub point: Vec<String>,
    /// CSV file with one point per row.
    #[arg(long)]
    pub points: Option<PathBuf>,
}

/// Failure classes with their exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 3,
            CliError::Input(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_domain() {
            CliError::Domain(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub rank: f64,
    pub check: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub check: &'static str,
    pub point: Vec<f64>,
    pub value: Value,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl Entry {
    fn new(
        check: &'static str,
        point: &[f64],
        value: Value,
        residual: f64,
        tolerance: f64,
    ) -> Self {
        let verdict = if residual <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Entry {
            check,
            point: point.to_vec(),
            value,
            residual,
            tolerance,
            verdict,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub model: String,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub tolerances: Tolerances,
    pub passed: bool,
    pub entries: Vec<Entry>,
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn main_with_args<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return e.exit_code();
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match &cli.command {
        Command::Check { common, points } => {
            let model = open_model(&common.model)?;
            let points = collect_points(points, model.dim())?;
            let report = cmd_check(&model, &points, common)?;
            write_json(out, &report)?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Curvature {
            common,
            slice,
            grid,
            out: path,
        } => {
            let model = open_model(&common.model)?;
            let slice = parse_slice(slice, model.dim())?;
            let grid = parse_grid(grid, slice.slice_dim())?;
            let scan = cmd_curvature(&model, &slice, &grid, common.tol_check)?;
            match path {
                Some(p) => std::fs::write(p, &scan.csv)?,
                None => out.write_all(scan.csv.as_bytes())?,
            }
            Ok(scan.exit_code())
        }
        Command::Legendre {
            common,
            slice,
            points,
            tol_legendre,
        } => {
            let model = open_model(&common.model)?;
            let slice = parse_slice(slice, model.dim())?;
            let points = collect_points(points, slice.slice_dim())?;
            let (value, passed) = cmd_legendre(&model, &slice, &points, common, *tol_legendre)?;
            write_json(out, &value)?;
            Ok(if passed { 0 } else { 1 })
        }
        Command::Report { common } => {
            let model = open_model(&common.model)?;
            let (text, passed) = cmd_report(&model, common)?;
            out.write_all(text.as_bytes())?;
            Ok(if passed { 0 } else { 1 })
        }
    }
}

fn write_json<S: Serialize>(out: &mut dyn Write, value: &S) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn timestamp(common: &Common) -> Option<String> {
    (!common.no_timestamp)
        .then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

/// `builtin:NAME` or a path to a model document.
pub fn open_model(spec: &str) -> Result<PotentialModel, CliError> {
    let loaded = match spec.strip_prefix("builtin:") {
        Some(name) => builtin(name, &[]),
        None => load_model_file(Path::new(spec)),
    };
    loaded.map_err(|e| CliError::Input(e.to_string()))
}

fn parse_numbers(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Input(format!("invalid number `{s}` in {what} `{text}`")))
        })
        .collect()
}

/// Parse one point `a,b,c` of the given dimension.
pub fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>, CliError> {
    let p = parse_numbers(text, "point")?;
    if p.len() != dim {
        return Err(CliError::Input(format!(
            "point `{text}` has {} coordinates, expected {dim}",
            p.len()
        )));
    }
    Ok(p)
}

/// Points from `--point` flags followed by the rows of `--points`. Blank
/// lines, `#` comments and a non-numeric first row (header) are skipped.
pub fn collect_points(args: &PointArgs, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut points = args
        .point
        .iter()
        .map(|p| parse_point(p, dim))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = &args.points {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        for (i, row) in rows.enumerate() {
            match parse_point(row, dim) {
                Ok(p) => points.push(p),
                Err(_) if i == 0 && row.split(',').any(|f| f.trim().parse::<f64>().is_err()) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if points.is_empty() {
        return Err(CliError::Input("no points given".into()));
    }
    Ok(points)
}

/// `b1,..,bn=c;...` into an exactly completed slice chart.
pub fn parse_slice(text: &str, dim: usize) -> Result<SliceSpec<f64>, CliError> {
    let mut rows = Vec::new();
    let mut constants = Vec::new();
    for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (row, c) = part
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("slice row `{part}` lacks `=c`")))?;
        let row = parse_numbers(row, "slice row")?;
        if row.len() != dim {
            return Err(CliError::Input(format!(
                "slice row `{part}` has {} entries, model has {dim} coordinates",
                row.len()
            )));
        }
        rows.push(row.into_iter().map(exact).collect::<Result<Vec<_>, _>>()?);
        constants.push(exact(parse_numbers(c, "slice constant")?[0])?);
    }
    if rows.is_empty() {
        return Err(CliError::Input("empty slice specification".into()));
    }
    let slice = make_slice(&Mat::from_rows(&rows), &constants, dim)?;
    Ok(slice.to_real())
}

fn exact(x: f64) -> Result<BigRational, CliError> {
    BigRational::from_float(x).ok_or_else(|| CliError::Input(format!("non-finite value {x}")))
}

/// `lo:hi:count,...`, one range per slice coordinate.
pub fn parse_grid(text: &str, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let axes = text
        .split(',')
        .map(|axis| {
            let parts: Vec<&str> = axis.trim().split(':').collect();
            let bad = || CliError::Input(format!("grid axis `{axis}` is not lo:hi:count"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let lo: f64 = parts[0].parse().map_err(|_| bad())?;
            let hi: f64 = parts[1].parse().map_err(|_| bad())?;
            let count: usize = parts[2].parse().map_err(|_| bad())?;
            if count == 0 || !lo.is_finite() || !hi.is_finite() {
                return Err(bad());
            }
            Ok((0..count)
                .map(|i| {
                    if count == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (count - 1) as f64
                    }
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>, _>>()?;
    if axes.len() != dim {
        return Err(CliError::Input(format!(
            "grid has {} axes, slice has dimension {dim}",
            axes.len()
        )));
    }
    let mut points = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn domain_guard(model: &PotentialModel, points: &[Vec<f64>]) -> Result<(), CliError> {
    match points.iter().find(|p| !model.domain_check(p)) {
        Some(p) => Err(CliError::Domain(format!(
            "point {p:?} is outside the domain of {}",
            model.name()
        ))),
        None => Ok(()),
    }
}

fn point_entries(
    model: &PotentialModel,
    p: &[f64],
    common: &Common,
) -> Result<Vec<Entry>, CliError> {
    let mf = hessian_metric(model, p)?;
    let psd = psd_check(&mf, common.tol_rank);
    let spectral = psd.min_eigenvalue.abs().max(psd.max_eigenvalue.abs());
    let relative = |x: f64| if spectral > 0.0 { x / spectral } else { x };
    let negativity = relative((-psd.min_eigenvalue).max(0.0));

    let ker = kernel(&mf, common.tol_rank);
    let smallest = ker
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, x| a.min(x.abs()));
    let degeneracy = relative(smallest).max(relative(ker.eigen_residual));

    let samples = EULER_SCALES
        .iter()
        .map(|&s| p.iter().map(|x| x * s).collect::<Vec<_>>())
        .filter(|q| model.domain_check(q))
        .map(|q| euler_defect(model, &q))
        .collect::<Result<Vec<f64>, _>>()?;
    let spread = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - samples.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(vec![
        Entry::new(
            "psd",
            p,
            json!({"min_eigenvalue": psd.min_eigenvalue, "max_eigenvalue": psd.max_eigenvalue}),
            negativity,
            common.tol_rank,
        ),
        Entry::new(
            "kernel",
            p,
            json!({
                "rank": ker.rank,
                "kernel_dim": ker.basis.len(),
                "basis": ker.basis,
                "eigen_residual": ker.eigen_residual,
            }),
            degeneracy,
            common.tol_rank,
        ),
        Entry::new(
            "gibbs_duhem",
            p,
            Value::Null,
            gibbs_duhem_residual(&mf),
            common.tol_check,
        ),
        Entry::new(
            "euler_defect",
            p,
            json!({"defect": samples[0], "scales": EULER_SCALES, "samples": samples}),
            spread,
            common.tol_check,
        ),
        Entry::new(
            "codazzi",
            p,
            Value::Null,
            codazzi_residual(&mf),
            common.tol_check,
        ),
    ])
}

pub fn cmd_check(
    model: &PotentialModel,
    points: &[Vec<f64>],
    common: &Common,
) -> Result<Report, CliError> {
    domain_guard(model, points)?;
    let mut entries = Vec::new();
    for p in points {
        entries.extend(point_entries(model, p, common)?);
    }
    Ok(Report {
        model: model.name().to_string(),
        version: VERSION,
        timestamp: timestamp(common),
        tolerances: Tolerances {
            rank: common.tol_rank,
            check: common.tol_check,
        },
        passed: entries.iter().all(|e| e.verdict == Verdict::Pass),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Kernel,
    Domain,
}

impl RowStatus {
    fn label(self) -> &'static str {
        match self {
            RowStatus::Ok => "OK",
            RowStatus::Kernel => "KERNEL",
            RowStatus::Domain => "DOMAIN",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurvatureRow {
    pub z: Vec<f64>,
    pub scalar: f64,
    pub lambda_min: f64,
    pub dual_flatness: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone)]
pub struct CurvatureScan {
    pub rows: Vec<CurvatureRow>,
    pub csv: String,
    pub tol_check: f64,
}

impl CurvatureScan {
    /// 3 when any row left the domain, 1 when dual flatness fails somewhere.
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().any(|r| r.status == RowStatus::Domain) {
            3
        } else if self
            .rows
            .iter()
            .any(|r| r.status == RowStatus::Ok && !(r.dual_flatness <= self.tol_check))
        {
            1
        } else {
            0
        }
    }
}

fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn curvature_row(
    model: &PotentialModel,
    slice: &SliceSpec<f64>,
    z: &[f64],
) -> Result<CurvatureRow, Error> {
    let blank = |status| CurvatureRow {
        z: z.to_vec(),
        scalar: f64::NAN,
        lambda_min: f64::NAN,
        dual_flatness: f64::NAN,
        status,
    };
    match curvature_at(model, slice, z) {
        Ok(report) => Ok(CurvatureRow {
            z: z.to_vec(),
            scalar: report.scalar,
            lambda_min: symmetric_eigen(&report.metric).values[0],
            dual_flatness: report.residuals.dual_flatness,
            status: RowStatus::Ok,
        }),
        Err(Error::DegeneratePullback { .. }) => Ok(blank(RowStatus::Kernel)),
        Err(e) if e.is_domain() => Ok(blank(RowStatus::Domain)),
        Err(e) => Err(e),
    }
}

pub fn cmd_curvature(
    model: &PotentialModel,
    slice: &SliceSpec<f64>,
    grid: &[Vec<f64>],
    tol_check: f64,
) -> Result<CurvatureScan, CliError> {
    let rows = worker_pool()?.install(|| {
        grid.par_iter()
            .map(|z| curvature_row(model, slice, z))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let r = slice.slice_dim();
    let mut csv = String::new();
    let header: Vec<String> = (1..=r)
        .map(|i| format!("z{i}"))
        .chain(["R", "lambda_min", "dual_flatness", "verdict"].map(String::from))
        .collect();
    csv.push_str(&header.join(","));
    csv.push('\n');
    for row in &rows {
        let mut cells: Vec<String> = row.z.iter().map(|x| format!("{x:.16e}")).collect();
        for v in [row.scalar, row.lambda_min, row.dual_flatness] {
            cells.push(if row.status == RowStatus::Ok {
                format!("{v:.16e}")
            } else {
                String::new()
            });
        }
        cells.push(row.status.label().to_string());
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    Ok(CurvatureScan {
        rows,
        csv,
        tol_check,
    })
}

pub fn cmd_legendre(
    model: &PotentialModel,
    slice: &SliceSpec<f64>,
    points: &[Vec<f64>],
    common: &Common,
    tol_legendre: f64,
) -> Result<(Value, bool), CliError> {
    let mut results = Vec::new();
    let mut passed = true;
    for z in points {
        let x = slice.embed(z)?;
        if !model.domain_check(&x) {
            return Err(CliError::Domain(format!(
                "slice point {z:?} embeds to {x:?}, outside the domain of {}",
                model.name()
            )));
        }
        let dual = dual_potential(model, slice, z)?;
        let coords = dual_coordinates(model, slice, z)?;
        let residual = legendre_invariance_residual(model, slice, z)?;
        let verdict = if residual <= tol_legendre {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        passed &= verdict == Verdict::Pass;
        results.push(json!({
            "point": z,
            "phi_star": dual.phi_star,
            "phi_star_extensive_form": dual.phi_star_extensive_form,
            "mismatch": dual.mismatch,
            "dual_coordinates": coords,
            "invariance_residual": residual,
            "tolerance": tol_legendre,
            "verdict": verdict,
        }));
    }
    let mut doc = serde_json::Map::new();
    doc.insert("model".into(), json!(model.name()));
    doc.insert("version".into(), json!(VERSION));
    if let Some(ts) = timestamp(common) {
        doc.insert("timestamp".into(), json!(ts));
    }
    doc.insert(
        "slice".into(),
        json!({
            "constraints": (0..slice.constraints().rows()).map(|i| slice.constraints().row(i)).collect::<Vec<_>>(),
            "constants": slice.constants(),
        }),
    );
    doc.insert("passed".into(), json!(passed));
    doc.insert("results".into(), Value::Array(results));
    Ok((Value::Object(doc), passed))
}

/// Points of `{0.5, 1, 2}^n` inside the domain, lexicographic.
pub fn report_lattice(model: &PotentialModel) -> Vec<Vec<f64>> {
    let n = model.dim();
    (0..REPORT_LATTICE.len().pow(n as u32))
        .map(|mut k| {
            let mut p = vec![0.0; n];
            for slot in p.iter_mut().rev() {
                *slot = REPORT_LATTICE[k % REPORT_LATTICE.len()];
                k /= REPORT_LATTICE.len();
            }
            p
        })
        .filter(|p| model.domain_check(p))
        .collect()
}

pub fn cmd_report(model: &PotentialModel, common: &Common) -> Result<(String, bool), CliError> {
    let points = report_lattice(model);
    if points.is_empty() {
        return Err(CliError::Domain(format!(
            "no lattice point lies in the domain of {}",
            model.name()
        )));
    }
    let report = cmd_check(model, &points, common)?;
    let mut text = String::new();
    let _ = writeln!(text, "model {}  (hessiometric {VERSION})", report.model);
    if let Some(ts) = &report.timestamp {
        let _ = writeln!(text, "run {ts}");
    }
    let _ = writeln!(
        text,
        "tolerances: rank {:e}, check {:e}; {} lattice points in domain",
        common.tol_rank,
        common.tol_check,
        points.len()
    );
    let checks = ["psd", "kernel", "gibbs_duhem", "euler_defect", "codazzi"];
    let width = points[0].len() * 6 + 2;
    let _ = write!(text, "{:<width$}", "point");
    for c in checks {
        let _ = write!(text, " {c:>14}");
    }
    let _ = writeln!(text, "  verdict");
    for (p, chunk) in points.iter().zip(report.entries.chunks(checks.len())) {
        let label: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
        let _ = write!(text, "{:<width$}", label.join(","));
        for e in chunk {
            let mark = if e.verdict == Verdict::Pass { ' ' } else { '*' };
            let _ = write!(text, " {:>13.3e}{mark}", e.residual);
        }
        let ok = chunk.iter().all(|e| e.verdict == Verdict::Pass);
        let _ = writeln!(text, "  {}", if ok { "pass" } else { "FAIL" });
    }
    let failed = report
        .entries
        .iter()
        .filter(|e| e.verdict == Verdict::Fail)
        .count();
    let _ = writeln!(
        text,
        "{} of {} checks failed (* marks residual above tolerance)",
        failed,
        report.entries.len()
    );
    Ok((text, report.passed))
}
