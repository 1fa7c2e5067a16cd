//! Output bundles: `series.csv` (or `series.json`), `summary.json`, `manifest.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::{CliError, Common};

pub const OUT_ENV: &str = "ZRP_OUT_DIR";
pub const DEFAULT_OUT: &str = "zrp-out";

/// One value of one observable of one replica at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: f64,
    pub replica: usize,
    pub observable: String,
    pub value: f64,
}

/// `--out`, then `ZRP_OUT_DIR`, then the configuration, then `zrp-out`.
pub fn out_dir(common: &Common, configured: Option<&Path>) -> PathBuf {
    if let Some(p) = &common.out {
        return p.clone();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    configured.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn prepare(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// One cell of a result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => num(*v),
            Cell::Text(v) => v.clone(),
        }
    }
}

/// Writes `<stem>.csv` or `<stem>.json` (an array of objects); returns the file name.
pub fn write_records(dir: &Path, stem: &str, format: Format, header: &[&str], rows: &[Vec<Cell>]) -> Result<String, CliError> {
    match format {
        Format::Csv => {
            let name = format!("{stem}.csv");
            let path = dir.join(&name);
            let mut w = csv_writer(&path)?;
            w.write_record(header).map_err(csv_err(&path))?;
            for r in rows {
                w.write_record(r.iter().map(Cell::render)).map_err(csv_err(&path))?;
            }
            w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?.flush()?;
            Ok(name)
        }
        Format::Json => {
            let name = format!("{stem}.json");
            let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| {
                    header
                        .iter()
                        .zip(r)
                        .map(|(h, c)| (h.to_string(), serde_json::to_value(c).expect("cells serialize")))
                        .collect()
                })
                .collect();
            write_json(&dir.join(&name), &objects)?;
            Ok(name)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes the series in the requested format; returns the file name.
pub fn write_series(dir: &Path, format: Format, rows: &[Row]) -> Result<String, CliError> {
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| vec![Cell::Num(r.t), Cell::Int(r.replica as i64), Cell::Text(r.observable.clone()), Cell::Num(r.value)])
        .collect();
    write_records(dir, "series", format, &["t", "replica", "observable", "value"], &table)
}

pub fn read_series(dir: &Path) -> Result<Vec<Row>, CliError> {
    let csv_path = dir.join("series.csv");
    if csv_path.exists() {
        let mut r = csv::Reader::from_path(&csv_path).map_err(|e| CliError::Validation(format!("{}: {e}", csv_path.display())))?;
        return r
            .deserialize()
            .collect::<Result<Vec<Row>, _>>()
            .map_err(|e| CliError::Validation(format!("{}: {e}", csv_path.display())));
    }
    let json_path = dir.join("series.json");
    let text = std::fs::read_to_string(&json_path)
        .map_err(|e| CliError::Validation(format!("{}: no series.csv or series.json ({e})", dir.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", json_path.display())))
}

pub fn read_manifest(dir: &Path) -> Result<serde_json::Value, CliError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Observable ids in order of first appearance.
pub fn observable_ids(rows: &[Row]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for r in rows {
        if !ids.contains(&r.observable) {
            ids.push(r.observable.clone());
        }
    }
    ids
}

/// Sample times and `values[replica][time]` of one observable; every replica
/// must carry the same times.
pub fn ensemble(rows: &[Row], id: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>), CliError> {
    let mut per: Vec<Vec<(f64, f64)>> = Vec::new();
    for r in rows.iter().filter(|r| r.observable == id) {
        if per.len() <= r.replica {
            per.resize(r.replica + 1, Vec::new());
        }
        per[r.replica].push((r.t, r.value));
    }
    if per.is_empty() {
        return Err(CliError::Validation(format!("observable `{id}` not found in the series")));
    }
    let times: Vec<f64> = per[0].iter().map(|p| p.0).collect();
    for (i, rep) in per.iter().enumerate() {
        if rep.len() != times.len() || rep.iter().zip(&times).any(|(p, t)| p.0 != *t) {
            return Err(CliError::Validation(format!(
                "observable `{id}`: replica {i} does not share the sample times of replica 0 (partial bundle?)"
            )));
        }
    }
    Ok((times, per.into_iter().map(|r| r.into_iter().map(|p| p.1).collect()).collect()))
}
