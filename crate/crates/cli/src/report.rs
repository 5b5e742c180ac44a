//! CSV result rows.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CSV_VERSION_LINE: &str = "# numsmooth results v1";

pub const HEADER: [&str; 13] = [
    "experiment", "method", "param", "estimate", "reference", "rel_error", "evals", "wall_s", "stat_err", "alpha",
    "beta", "gamma", "kurtosis_L",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub param: String,
    pub estimate: f64,
    pub reference: Option<f64>,
    pub rel_error: Option<f64>,
    /// Integrand evaluations (ASGQ), modelled work (MLMC) or samples times steps (MC).
    pub evals: f64,
    pub wall_s: f64,
    pub stat_err: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(rename = "kurtosis_L")]
    pub kurtosis_l: Option<f64>,
}

impl ResultRow {
    pub fn new(experiment: &str, method: &str, param: String, estimate: f64, reference: Option<f64>) -> Self {
        Self {
            experiment: experiment.into(),
            method: method.into(),
            param,
            estimate,
            reference,
            rel_error: reference.map(|r| relative_error(estimate, r)),
            evals: 0.0,
            wall_s: 0.0,
            stat_err: None,
            alpha: None,
            beta: None,
            gamma: None,
            kurtosis_l: None,
        }
    }
}

pub fn relative_error(estimate: f64, reference: f64) -> f64 {
    (estimate - reference).abs() / reference.abs()
}

/// CSV text including the version comment and header.
pub fn to_csv_string(rows: &[ResultRow]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    let mut out = format!("{CSV_VERSION_LINE}\n").into_bytes();
    out.extend(w.into_inner().map_err(|e| io(e.into_error()))?);
    String::from_utf8(out).map_err(|e| CliError::Io(e.to_string()))
}

/// Appends rows, writing the version line and header only into a new or empty file.
pub fn append_csv(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let text = to_csv_string(rows)?;
    let body = if fresh {
        text
    } else {
        text.lines().skip(2).map(|l| format!("{l}\n")).collect()
    };
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(body.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, CliError> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(io)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text)
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}
