//! Measure and curve files.
//!
//! Measures are read from CSV (one atom per line, `d` coordinates and an
//! optional trailing mass, no header) or JSON
//! (`{"dim": d, "atoms": [{"x": [...], "m": ...}, ...]}`, `m` optional).
//! Curves use `{"dim": d, "vertices": [[...], ...]}`.

use std::fmt;
use std::path::Path;

use pcurve_core::{DiscreteMeasure, Polyline};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MeasureFormat {
    Csv,
    Json,
}

impl MeasureFormat {
    /// `.json` files are JSON, everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormatError {
    /// A CSV line or JSON atom that does not parse; `record` is 1-based.
    Record {
        record: usize,
        message: String,
    },
    Json(String),
    Invalid(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Record { record, message } => write!(f, "line {record}: {message}"),
            Self::Json(m) => write!(f, "malformed JSON: {m}"),
            Self::Invalid(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for FormatError {}

/// `dim` only matters for CSV.
pub fn parse_measure(text: &str, format: MeasureFormat, dim: Option<usize>) -> Result<DiscreteMeasure, FormatError> {
    match format {
        MeasureFormat::Csv => parse_measure_csv(text, dim),
        MeasureFormat::Json => parse_measure_json(text),
    }
}

/// Rows hold `dim` coordinates (2 when `None`) and an optional mass, the
/// same layout on every row. Masses default to `1/n`. Blank lines are skipped.
pub fn parse_measure_csv(text: &str, dim: Option<usize>) -> Result<DiscreteMeasure, FormatError> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| FormatError::Record {
                    record: k + 1,
                    message: format!("`{f}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((k + 1, fields));
    }
    let Some((_, first)) = rows.first() else {
        return Err(FormatError::Invalid("measure file has no atoms".into()));
    };
    let dim = dim.unwrap_or(2);
    if dim < 2 {
        return Err(FormatError::Invalid(format!("dimension must be at least 2 (got {dim})")));
    }
    let width = first.len();
    if width != dim && width != dim + 1 {
        return Err(FormatError::Record {
            record: rows[0].0,
            message: format!("expected {dim} coordinates and an optional mass, found {width} fields"),
        });
    }
    for (line, r) in &rows {
        if r.len() != width {
            return Err(FormatError::Record {
                record: *line,
                message: format!("expected {width} fields like the first line, found {}", r.len()),
            });
        }
    }
    let weighted = width == dim + 1;
    let n = rows.len();
    let mut coords = Vec::with_capacity(n * dim);
    let mut masses = Vec::with_capacity(n);
    for (line, r) in &rows {
        coords.extend_from_slice(&r[..dim]);
        let m = if weighted { r[dim] } else { 1.0 / n as f64 };
        if !(m > 0.0) {
            return Err(FormatError::Record { record: *line, message: format!("mass {m} is not positive") });
        }
        masses.push(m);
    }
    DiscreteMeasure::new(dim, coords, masses).map_err(|e| FormatError::Invalid(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureJson {
    dim: usize,
    atoms: Vec<AtomJson>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomJson {
    x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
}

/// Atoms without `m` share the mass `1/n`.
pub fn parse_measure_json(text: &str) -> Result<DiscreteMeasure, FormatError> {
    let doc: MeasureJson = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    let n = doc.atoms.len();
    if n == 0 {
        return Err(FormatError::Invalid("measure file has no atoms".into()));
    }
    let mut coords = Vec::with_capacity(n * doc.dim);
    let mut masses = Vec::with_capacity(n);
    for (k, a) in doc.atoms.iter().enumerate() {
        let record = k + 1;
        if a.x.len() != doc.dim {
            return Err(FormatError::Record {
                record,
                message: format!("atom has {} coordinates, expected {}", a.x.len(), doc.dim),
            });
        }
        let m = a.m.unwrap_or(1.0 / n as f64);
        if !(m > 0.0 && m.is_finite()) {
            return Err(FormatError::Record { record, message: format!("mass {m} is not positive") });
        }
        coords.extend_from_slice(&a.x);
        masses.push(m);
    }
    DiscreteMeasure::new(doc.dim, coords, masses).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// CSV with an explicit mass column, in shortest round-trip notation.
pub fn measure_to_csv(mu: &DiscreteMeasure) -> String {
    let mut out = String::new();
    for (x, m) in mu.atoms() {
        for v in x {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{m:?}\n"));
    }
    out
}

pub fn measure_to_json(mu: &DiscreteMeasure) -> String {
    let doc =
        MeasureJson { dim: mu.dim(), atoms: mu.atoms().map(|(x, m)| AtomJson { x: x.to_vec(), m: Some(m) }).collect() };
    serde_json::to_string_pretty(&doc).expect("measure serializes")
}

/// Reads a curve; extra top-level fields such as an embedded manifest are ignored.
pub fn parse_curve(text: &str) -> Result<Polyline, FormatError> {
    if text.trim().is_empty() {
        return Err(FormatError::Invalid("curve file is empty".into()));
    }
    serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))
}

pub fn read_measure(
    path: &Path,
    format: Option<MeasureFormat>,
    dim: Option<usize>,
) -> Result<DiscreteMeasure, crate::CliError> {
    let text = crate::read_input(path)?;
    let format = format.unwrap_or_else(|| MeasureFormat::from_path(path));
    parse_measure(&text, format, dim).map_err(|e| crate::CliError::input(format!("{}: {e}", path.display())))
}

pub fn read_curve(path: &Path) -> Result<Polyline, crate::CliError> {
    let text = crate::read_input(path)?;
    parse_curve(&text).map_err(|e| crate::CliError::input(format!("{}: {e}", path.display())))
}
