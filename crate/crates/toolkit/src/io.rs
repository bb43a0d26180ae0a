//! Path files, matrices and report artifacts.
//!
//! A path file is comma-separated with a header `time,<label>,…` and one row
//! per grid time t₀..t_N. A JSON sidecar of the same stem carries the grid and
//! metadata; without it the grid is inferred from the time column.

use std::fs;
use std::path::{Path, PathBuf};

use bss_core::covariation::VechSeries;
use bss_core::simulate::{GridSpec, PathBundle, PathMeta};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ToolkitError, ToolkitResult};
use crate::report::ExperimentReport;

/// Relative tolerance on grid spacing.
pub const SPACING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSidecar {
    pub grid: GridSpec,
    pub labels: Vec<String>,
    pub meta: PathMeta,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn create_parent(path: &Path) -> ToolkitResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ToolkitError::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> ToolkitResult<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| ToolkitError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> ToolkitResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn csv_writer(path: &Path) -> ToolkitResult<csv::Writer<fs::File>> {
    create_parent(path)?;
    csv::Writer::from_path(path).map_err(ToolkitError::from)
}

/// Writes the path file and its sidecar.
pub fn write_paths(bundle: &PathBundle, path: &Path) -> ToolkitResult<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["time".to_string()];
    header.extend(bundle.labels.iter().cloned());
    w.write_record(&header)?;
    for row in 0..=bundle.steps() {
        let mut rec = vec![bundle.grid.time(row).to_string()];
        rec.extend((0..bundle.p()).map(|k| bundle.level(row, k).to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| ToolkitError::io(path, e))?;
    let side = PathSidecar { grid: bundle.grid, labels: bundle.labels.clone(), meta: bundle.meta.clone() };
    write_json(&sidecar_path(path), &side)
}

/// Reads and validates a path file (and its sidecar, when present).
pub fn ingest_paths(path: &Path) -> ToolkitResult<PathBundle> {
    let text = fs::read_to_string(path).map_err(|e| ToolkitError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut rows = r.records();
    let header = match rows.next() {
        None => return Err(ToolkitError::schema(1, 1, "empty file")),
        Some(h) => h?,
    };
    if header.get(0).map(str::trim) != Some("time") {
        return Err(ToolkitError::schema(1, 1, "first column must be `time`"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if labels.is_empty() {
        return Err(ToolkitError::schema(1, 2, "no data columns"));
    }
    let p = labels.len();
    let mut times = Vec::new();
    let mut levels = Vec::new();
    for (i, rec) in rows.enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != p + 1 {
            return Err(ToolkitError::schema(row, rec.len().min(p + 1), format!("expected {} fields, got {}", p + 1, rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| ToolkitError::schema(row, c + 1, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(ToolkitError::schema(row, c + 1, format!("non-finite value `{field}`")));
            }
            if c == 0 {
                times.push(v);
            } else {
                levels.push(v);
            }
        }
    }
    if times.len() < 2 {
        return Err(ToolkitError::schema(times.len() + 2, 1, "need at least two grid times"));
    }
    let dt = times[1] - times[0];
    for (i, w) in times.windows(2).enumerate() {
        let s = w[1] - w[0];
        if !(s > 0.0) {
            return Err(ToolkitError::schema(i + 3, 1, "times must be strictly increasing"));
        }
        if (s - dt).abs() > SPACING_TOL * dt {
            return Err(ToolkitError::NonUniformGrid { row: i + 3, spacing: s, expected: dt });
        }
    }
    let steps = times.len() - 1;
    let side = sidecar_path(path);
    let (grid, labels, meta) = if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| ToolkitError::io(&side, e))?;
        let s: PathSidecar = serde_json::from_str(&text)?;
        if s.grid.steps() != steps || s.labels != labels {
            return Err(ToolkitError::schema(1, 1, "sidecar grid or labels disagree with the file"));
        }
        (s.grid, s.labels, s.meta)
    } else {
        let n = (1.0 / dt).round();
        if n < 1.0 || (n * dt - 1.0).abs() > SPACING_TOL {
            return Err(ToolkitError::schema(3, 1, format!("spacing {dt} is not 1/n for an integer n")));
        }
        let grid = GridSpec::new(steps as f64 / n, n as usize, 0.0)?;
        if grid.steps() != steps {
            return Err(ToolkitError::schema(1, 1, "grid horizon inconsistent with row count"));
        }
        (grid, labels, PathMeta::ingested())
    };
    Ok(PathBundle::from_levels(grid, labels, levels, meta)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub row_labels: Vec<String>,
    pub notes: serde_json::Value,
}

/// Matrix as CSV (no header) plus a JSON header sidecar.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, header: &MatrixHeader) -> ToolkitResult<()> {
    let mut w = csv_writer(path)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| ToolkitError::io(path, e))?;
    write_json(&sidecar_path(path), header)
}

pub fn read_matrix(path: &Path) -> ToolkitResult<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(ToolkitError::schema(i + 1, rec.len(), "ragged matrix row"));
        }
        for (c, f) in rec.iter().enumerate() {
            data.push(f.parse::<f64>().map_err(|_| ToolkitError::schema(i + 1, c + 1, "not a number"))?);
        }
    }
    let cols = cols.unwrap_or(0);
    let rows = if cols == 0 { 0 } else { data.len() / cols };
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Vech series as CSV: `time,(1,1),(2,1),…`.
pub fn write_series(path: &Path, s: &VechSeries) -> ToolkitResult<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["time".to_string()];
    for k in 0..s.p {
        for l in 0..=k {
            header.push(format!("({},{})", k + 1, l + 1));
        }
    }
    w.write_record(&header)?;
    for i in 0..s.rows() {
        let mut rec = vec![s.times[i].to_string()];
        rec.extend(s.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| ToolkitError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
    PlotData,
}

/// Writes the report in each requested format under `dir`; returns the files.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[ReportFormat]) -> ToolkitResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for f in formats {
        let path = match f {
            ReportFormat::Json => {
                let p = dir.join("report.json");
                write_json(&p, report)?;
                p
            }
            ReportFormat::Table => {
                let p = dir.join("records.csv");
                let mut w = csv_writer(&p)?;
                w.write_record(["statistic", "check", "time", "empirical", "target", "se", "z", "pass", "gating", "theorem", "formula_hash"])?;
                for r in &report.records {
                    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                    w.write_record([
                        r.statistic.clone(),
                        format!("{:?}", r.check),
                        opt(r.time),
                        opt(r.empirical),
                        opt(r.target),
                        opt(r.se),
                        opt(r.z),
                        r.pass.to_string(),
                        r.gating.to_string(),
                        r.provenance.theorem.clone(),
                        r.provenance.formula_hash.clone(),
                    ])?;
                }
                w.flush().map_err(|e| ToolkitError::io(&p, e))?;
                p
            }
            ReportFormat::PlotData => {
                let p = dir.join("plot_data.csv");
                let mut w = csv_writer(&p)?;
                w.write_record(["statistic", "t", "value", "band_lower", "band_upper"])?;
                for r in report.records.iter().filter(|r| r.time.is_some() && r.empirical.is_some()) {
                    let half = r.se.map(|s| report.se_multiplier * s);
                    let centre = r.target.unwrap_or(f64::NAN);
                    let band = |sign: f64| half.map(|h| (centre + sign * h).to_string()).unwrap_or_default();
                    w.write_record([
                        r.statistic.clone(),
                        r.time.unwrap().to_string(),
                        r.empirical.unwrap().to_string(),
                        band(-1.0),
                        band(1.0),
                    ])?;
                }
                w.flush().map_err(|e| ToolkitError::io(&p, e))?;
                p
            }
        };
        out.push(path);
    }
    if let Some(t) = &report.timing {
        let p = dir.join("timing.json");
        write_json(&p, t)?;
        out.push(p);
    }
    Ok(out)
}
