//! CSV and JSON file formats.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use meddesign_core::design::DISTINCT_TOL;
use meddesign_core::simulation::RepStatus;
use meddesign_core::{ContourMeasure, Design, DoseCombination, ExactDesign, SimResult};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Weight sums further than this from one are reported when loading.
pub const WEIGHT_WARN_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Design { path: PathBuf, source: meddesign_core::Error },
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> FileError + '_ {
    move |source| FileError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightRow {
    c: f64,
    d: f64,
    weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    c: f64,
    d: f64,
    count: usize,
}

/// Reads a `c,d,weight` design. Weights are normalized and coincident
/// points merged.
pub fn read_design(path: &Path) -> Result<Design, FileError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let rows: Vec<WeightRow> = reader.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))?;
    let total: f64 = rows.iter().map(|r| r.weight).sum();
    if (total - 1.0).abs() > WEIGHT_WARN_TOL {
        log::warn!("{}: weights sum to {total}, normalizing", path.display());
    }
    let points: Vec<DoseCombination> = rows.iter().map(|r| DoseCombination::new(r.c, r.d)).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
        return Err(FileError::Design {
            path: path.to_path_buf(),
            source: meddesign_core::Error::InvalidDesign(format!("weights must be positive, got {w}")),
        });
    }
    let design = Design::merged(points, weights, DISTINCT_TOL).map_err(|source| FileError::Design {
        path: path.to_path_buf(),
        source,
    })?;
    if design.len() < rows.len() {
        log::info!(
            "{}: merged {} rows into {} distinct points",
            path.display(),
            rows.len(),
            design.len()
        );
    }
    Ok(design)
}

pub fn write_design(path: &Path, design: &Design) -> Result<(), FileError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (x, weight) in design.iter() {
        w.serialize(WeightRow { c: x.c, d: x.d, weight }).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a `c,d,count` exact design.
pub fn read_exact_design(path: &Path) -> Result<ExactDesign, FileError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let rows: Vec<CountRow> = reader.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))?;
    ExactDesign::new(
        rows.iter().map(|r| DoseCombination::new(r.c, r.d)).collect(),
        rows.iter().map(|r| r.count).collect(),
    )
    .map_err(|source| FileError::Design {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_exact_design(path: &Path, exact: &ExactDesign) -> Result<(), FileError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (x, &count) in exact.points().iter().zip(exact.counts()) {
        w.serialize(CountRow { c: x.c, d: x.d, count }).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Contour atoms as `level,c,d`, the level given in percent.
pub fn write_contour(path: &Path, measure: &ContourMeasure) -> Result<(), FileError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["level", "c", "d"]).map_err(csv_err(path))?;
    for a in measure.atoms() {
        let level = measure.levels()[a.level];
        w.write_record([level.to_string(), a.x.c.to_string(), a.x.d.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Long-format replicate table `design,n_total,rep,rmse,status`; failed
/// replicates have an empty `rmse`.
pub fn write_rmse_table<W: Write>(out: W, result: &SimResult) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["design", "n_total", "rep", "rmse", "status"])?;
    for r in &result.records {
        let rmse = match r.status {
            RepStatus::Ok => r.rmse.to_string(),
            _ => String::new(),
        };
        w.write_record([
            result.design_names[r.design].as_str(),
            &r.n_total.to_string(),
            &r.rep.to_string(),
            &rmse,
            r.status.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rmse_csv(path: &Path, result: &SimResult) -> Result<(), FileError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_rmse_table(io::BufWriter::new(file), result).map_err(csv_err(path))
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Quartiles and failure counts per `(design, N)`, in study order.
pub fn summary_json(result: &SimResult) -> Value {
    let mut rows = Vec::new();
    for (d, name) in result.design_names.iter().enumerate() {
        for &n in &result.n_totals {
            let s = result.summary(d, n);
            rows.push(json!({
                "design": name,
                "n_total": n,
                "median": finite(s.median),
                "q25": finite(s.q25),
                "q75": finite(s.q75),
                "successes": s.successes,
                "failures": s.fit_failures + s.contour_failures,
                "fit_failures": s.fit_failures,
                "contour_failures": s.contour_failures,
            }));
        }
    }
    json!({ "reps": result.reps, "summary": rows })
}

pub fn design_json(design: &Design) -> Value {
    Value::Array(
        design
            .iter()
            .map(|(x, w)| json!({"c": x.c, "d": x.d, "weight": w}))
            .collect(),
    )
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<(), FileError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FileError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}
