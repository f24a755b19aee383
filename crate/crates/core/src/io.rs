//! Design files and result tables.
//!
//! CSV files carry one row per support point with columns `x1..xp` followed
//! by `weight` (approximate designs) or `count` (exact designs); values are
//! printed to six significant digits. JSON files keep full precision.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{ApproximateDesign, ExactDesign};
use crate::error::{DesignError, Result};
use crate::exact::{AnnealTrace, RestartReport};

/// Errors from reading or writing result files.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// A design as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignFile {
    Approximate { points: Vec<Vec<f64>>, weights: Vec<f64> },
    Exact { points: Vec<Vec<f64>>, counts: Vec<u32> },
}

impl From<&ApproximateDesign> for DesignFile {
    fn from(d: &ApproximateDesign) -> Self {
        DesignFile::Approximate {
            points: d.points().to_vec(),
            weights: d.weights().to_vec(),
        }
    }
}

impl From<&ExactDesign> for DesignFile {
    fn from(d: &ExactDesign) -> Self {
        DesignFile::Exact {
            points: d.points().to_vec(),
            counts: d.counts().to_vec(),
        }
    }
}

impl DesignFile {
    pub fn points(&self) -> &[Vec<f64>] {
        match self {
            DesignFile::Approximate { points, .. } | DesignFile::Exact { points, .. } => points,
        }
    }

    /// Validated approximate design (exact designs use `count / n` weights).
    pub fn to_approximate(&self) -> Result<ApproximateDesign> {
        match self {
            DesignFile::Approximate { points, weights } => ApproximateDesign::new(points.clone(), weights.clone()),
            DesignFile::Exact { points, counts } => {
                Ok(ExactDesign::new(points.clone(), counts.clone())?.to_approximate())
            }
        }
    }

    pub fn to_exact(&self) -> Result<ExactDesign> {
        match self {
            DesignFile::Exact { points, counts } => ExactDesign::new(points.clone(), counts.clone()),
            DesignFile::Approximate { .. } => Err(DesignError::InvalidDesign(
                "expected an exact design (counts), found weights".into(),
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        self.to_approximate().map(|_| ())
    }
}

/// Formats a value with six significant digits, without trailing zeros.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    let plain = rounded.to_string();
    let sci = format!("{rounded:e}");
    if plain.len() <= sci.len() {
        plain
    } else {
        sci
    }
}

pub fn design_csv(design: &DesignFile) -> String {
    let p = design.points().first().map_or(0, |x| x.len());
    let mut out = String::new();
    let mut header: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
    header.push(match design {
        DesignFile::Approximate { .. } => "weight".into(),
        DesignFile::Exact { .. } => "count".into(),
    });
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, x) in design.points().iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(|v| sig6(*v)).collect();
        row.push(match design {
            DesignFile::Approximate { weights, .. } => sig6(weights[i]),
            DesignFile::Exact { counts, .. } => counts[i].to_string(),
        });
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a design CSV (header `x1..xp,weight` or `x1..xp,count`).
pub fn parse_design_csv(text: &str) -> Result<DesignFile, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IoError::Format(format!("design CSV header: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let Some((last, coords)) = cols.split_last() else {
        return Err(IoError::Format("design CSV has no columns".into()));
    };
    if coords.is_empty() {
        return Err(IoError::Format("design CSV needs at least one coordinate column".into()));
    }
    for (i, c) in coords.iter().enumerate() {
        if *c != format!("x{}", i + 1) {
            return Err(IoError::Format(format!("expected column x{}, found `{c}`", i + 1)));
        }
    }
    let exact = match *last {
        "weight" => false,
        "count" => true,
        other => {
            return Err(IoError::Format(format!(
                "last column must be `weight` or `count`, found `{other}`"
            )))
        }
    };
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut counts = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IoError::Format(format!("design CSV row {}: {e}", line + 1)))?;
        if rec.len() != cols.len() {
            return Err(IoError::Format(format!(
                "design CSV row {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                cols.len()
            )));
        }
        let num = |s: &str| -> Result<f64, IoError> {
            s.parse::<f64>()
                .map_err(|_| IoError::Format(format!("design CSV row {}: `{s}` is not a number", line + 1)))
        };
        let x = rec.iter().take(coords.len()).map(num).collect::<Result<Vec<_>, _>>()?;
        points.push(x);
        let v = &rec[coords.len()];
        if exact {
            counts.push(v.parse::<u32>().map_err(|_| {
                IoError::Format(format!("design CSV row {}: `{v}` is not a run count", line + 1))
            })?);
        } else {
            weights.push(num(v)?);
        }
    }
    let design = if exact {
        DesignFile::Exact { points, counts }
    } else {
        DesignFile::Approximate { points, weights }
    };
    design.validate()?;
    Ok(design)
}

pub fn design_json(design: &DesignFile) -> String {
    let mut s = serde_json::to_string_pretty(design).expect("designs serialize");
    s.push('\n');
    s
}

pub fn parse_design_json(text: &str) -> Result<DesignFile, IoError> {
    let design: DesignFile =
        serde_json::from_str(text).map_err(|e| IoError::Format(format!("design JSON: {e}")))?;
    design.validate()?;
    Ok(design)
}

/// Reads a design from a `.json` or `.csv` file.
pub fn read_design(path: &Path) -> Result<DesignFile, IoError> {
    let text = read_text(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_design_json(&text),
        Some("csv") => parse_design_csv(&text),
        _ => Err(IoError::Format(format!(
            "{}: design files must end in .json or .csv",
            path.display()
        ))),
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `design.csv` and `design.json` (or `<stem>.csv` / `<stem>.json`).
pub fn write_design(dir: &Path, stem: &str, design: &DesignFile) -> Result<(), IoError> {
    write_text(&dir.join(format!("{stem}.csv")), &design_csv(design))?;
    write_text(&dir.join(format!("{stem}.json")), &design_json(design))
}

pub fn trace_csv(trace: &AnnealTrace) -> String {
    let mut out = String::from("iteration,temperature,proposed_loss,current_loss,accepted,best_loss\n");
    for r in &trace.records {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{},{:e}\n",
            r.iteration,
            r.temperature,
            r.proposed_loss,
            r.current_loss,
            u8::from(r.accepted),
            r.best_loss
        ));
    }
    out
}

pub fn restarts_csv(reports: &[RestartReport]) -> String {
    let mut out = String::from("restart,final_loss,efficiency,iterations,accepted,error\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:e},{:e},{},{},{}\n",
            r.restart,
            r.final_loss,
            r.efficiency,
            r.proposals,
            r.accepted,
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        ));
    }
    out
}

/// Directional derivative at every candidate, one row per candidate.
pub fn dprofile_csv(candidates: &[Vec<f64>], d: &[f64]) -> String {
    let p = candidates.first().map_or(0, |x| x.len());
    let mut header: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
    header.push("d".into());
    let mut out = header.join(",");
    out.push('\n');
    for (x, v) in candidates.iter().zip(d) {
        let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        row.push(format!("{v:e}"));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
