//! Matrix files, trajectory CSV, repair reports and the SVG drift plot.
//!
//! Matrix files come in two flavours:
//!
//! - CSV: one matrix row per line, comma separated, with an optional
//!   `# rows cols` header comment. Other `#` lines are ignored.
//! - JSON: `{"rows": r, "cols": c, "data": [row-major entries]}`.
//!
//! Numbers are written in the shortest decimal form that parses back to the
//! same `f64`, so every finite matrix survives a write/read cycle bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{Eigenvalue, SpectrumReport, ViolationReport};
use crate::error::Error as CoreError;
use crate::model::{DenseMatrix, RepairResult, Trajectory};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Matrix {
        path: PathBuf,
        #[source]
        source: CoreError,
    },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Json,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }

    /// `.json` means JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }

    fn sniff(path: &Path, text: &str) -> Self {
        if text.trim_start().starts_with('{') {
            Self::Json
        } else {
            Self::from_path(path)
        }
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-5, 1e16)`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DenseMatrix> for MatrixJson {
    fn from(m: &DenseMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl TryFrom<MatrixJson> for DenseMatrix {
    type Error = CoreError;

    fn try_from(m: MatrixJson) -> Result<Self, CoreError> {
        DenseMatrix::new(m.rows, m.cols, m.data)
    }
}

pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = format!("# {} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_to_json(m: &DenseMatrix) -> String {
    let mut s = serde_json::to_string(&MatrixJson::from(m)).expect("plain struct serializes");
    s.push('\n');
    s
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.trim_start_matches('#').split_whitespace();
    let rows = parts.next()?.parse().ok()?;
    let cols = parts.next()?.parse().ok()?;
    parts.next().is_none().then_some((rows, cols))
}

pub fn parse_matrix_csv(path: &Path, text: &str) -> Result<DenseMatrix, IoError> {
    let mut header = None;
    let mut cols = None;
    let mut rows = 0usize;
    let mut data = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if header.is_none() && rows == 0 {
                header = parse_header(line);
            }
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| IoError::parse(path, lineno, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(IoError::parse(
                    path,
                    lineno,
                    format!("non-finite value {field:?}"),
                ));
            }
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(IoError::parse(
                    path,
                    lineno,
                    format!("row has {count} values, expected {c}"),
                ))
            }
            Some(_) => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| IoError::parse(path, 1, "no matrix rows found"))?;
    if let Some((hr, hc)) = header {
        if (hr, hc) != (rows, cols) {
            return Err(IoError::parse(
                path,
                1,
                format!("header declares {hr}x{hc} but data is {rows}x{cols}"),
            ));
        }
    }
    DenseMatrix::new(rows, cols, data).map_err(|source| IoError::Matrix {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_matrix_json(path: &Path, text: &str) -> Result<DenseMatrix, IoError> {
    let raw: MatrixJson = serde_json::from_str(text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    DenseMatrix::try_from(raw).map_err(|source| IoError::Matrix {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_matrix(path: &Path, text: &str) -> Result<DenseMatrix, IoError> {
    match MatrixFormat::sniff(path, text) {
        MatrixFormat::Csv => parse_matrix_csv(path, text),
        MatrixFormat::Json => parse_matrix_json(path, text),
    }
}

/// Reads a matrix file, detecting JSON by content or extension.
pub fn read_matrix(path: &Path) -> Result<(DenseMatrix, MatrixFormat), IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let format = MatrixFormat::sniff(path, &text);
    Ok((parse_matrix(path, &text)?, format))
}

pub fn render_matrix(m: &DenseMatrix, format: MatrixFormat) -> String {
    match format {
        MatrixFormat::Csv => matrix_to_csv(m),
        MatrixFormat::Json => matrix_to_json(m),
    }
}

pub fn write_matrix(path: &Path, m: &DenseMatrix, format: MatrixFormat) -> Result<(), IoError> {
    write_atomic(path, render_matrix(m, format).as_bytes())
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| IoError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        IoError::io(path, e)
    })
}

/// Parses `"0.7,0.2,0.1"`; whitespace around entries is allowed.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("not a finite number: {s:?}"))
        })
        .collect()
}

/// Trajectory CSV with header `t,x_1,...,x_n,inv_1,...,inv_m`.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let n = traj.state_dim();
    let m = traj.invariant_count();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=m).map(|i| format!("inv_{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..traj.len() {
        let mut fields = vec![format_f64(traj.times[k])];
        fields.extend(traj.states[k].iter().map(|v| format_f64(*v)));
        fields.extend(traj.invariant_values[k].iter().map(|v| format_f64(*v)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Side-by-side invariant values and drift for two runs on the same grid.
pub fn drift_comparison_csv(learned: &Trajectory, repaired: &Trajectory) -> String {
    let m = learned.invariant_count();
    let mut header = vec!["t".to_string()];
    for label in [
        "inv_learned",
        "inv_repaired",
        "drift_learned",
        "drift_repaired",
    ] {
        header.extend((1..=m).map(|i| format!("{label}_{i}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    let base_l = &learned.invariant_values[0];
    let base_r = &repaired.invariant_values[0];
    for k in 0..learned.len().min(repaired.len()) {
        let il = &learned.invariant_values[k];
        let ir = &repaired.invariant_values[k];
        let mut fields = vec![format_f64(learned.times[k])];
        fields.extend(il.iter().map(|v| format_f64(*v)));
        fields.extend(ir.iter().map(|v| format_f64(*v)));
        fields.extend(il.iter().zip(base_l).map(|(v, b)| format_f64(v - b)));
        fields.extend(ir.iter().zip(base_r).map(|(v, b)| format_f64(v - b)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ViolationSummary {
    pub matrix: MatrixJson,
    pub max_abs: f64,
    pub fro_norm: f64,
}

impl From<&ViolationReport> for ViolationSummary {
    fn from(r: &ViolationReport) -> Self {
        Self {
            matrix: MatrixJson::from(&r.violation_matrix),
            max_abs: r.max_abs,
            fro_norm: r.fro_norm,
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq)]
pub struct ReportSettings {
    pub feas_tol: f64,
    pub rank_tol: f64,
}

/// JSON summary of one repair.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct RepairReportFile {
    pub input_path: String,
    pub constraint_path: String,
    pub violation_before: ViolationSummary,
    pub violation_after: ViolationSummary,
    pub correction_fro_norm: f64,
    pub correction_rank: usize,
    pub eigenvalues_before: Vec<[f64; 2]>,
    pub eigenvalues_after: Vec<[f64; 2]>,
    pub settings: ReportSettings,
}

fn pairs(values: &[Eigenvalue]) -> Vec<[f64; 2]> {
    values.iter().map(|e| [e.re, e.im]).collect()
}

impl RepairReportFile {
    pub fn new(
        input_path: impl Into<String>,
        constraint_path: impl Into<String>,
        repair: &RepairResult,
        spectrum: &SpectrumReport,
        settings: ReportSettings,
    ) -> Self {
        Self {
            input_path: input_path.into(),
            constraint_path: constraint_path.into(),
            violation_before: (&ViolationReport::from_matrix(repair.violation_before.clone()))
                .into(),
            violation_after: (&ViolationReport::from_matrix(repair.violation_after.clone())).into(),
            correction_fro_norm: repair.correction_fro_norm,
            correction_rank: repair.correction_rank,
            eigenvalues_before: pairs(&spectrum.eigenvalues_before),
            eigenvalues_after: pairs(&spectrum.eigenvalues_after),
            settings,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain struct serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A labelled polyline for [`line_plot_svg`].
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1e-3);
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Line chart with linear axes autoscaled to the data extent.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>]) -> String {
    let (x0, x1) = extent(series.iter().flat_map(|s| s.xs.iter().copied()));
    let (y0, y1) = extent(series.iter().flat_map(|s| s.ys.iter().copied()));
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = SVG_WIDTH,
        h = SVG_HEIGHT
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        SVG_WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let bottom = MARGIN_TOP + plot_h;
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{}</text>"#,
            px(x),
            bottom + 16.0,
            format_tick(x)
        );
    }
    for y in [y0, y1] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py(y) + 4.0,
            format_tick(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let points: Vec<String> =
            s.xs.iter()
                .zip(s.ys)
                .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            s.color,
            points.join(" ")
        );
        let ly = MARGIN_TOP + 18.0 + 18.0 * k as f64;
        let lx = MARGIN_LEFT + plot_w - 170.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/>"#,
            lx + 24.0,
            s.color
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e5).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
