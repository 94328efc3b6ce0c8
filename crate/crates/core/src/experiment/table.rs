//! Result tables, aggregation and on-disk artifacts.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{Assertion, Failure, StudyOutput};
use crate::error::{Error, Result};

/// A CSV cell. Floats are written with 17 significant digits so that a
/// parse recovers the exact value.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn parse(s: &str) -> Cell {
        if let Ok(v) = s.parse::<i64>() {
            return Cell::Int(v);
        }
        if s.contains(['e', 'E']) || s.contains("inf") || s == "NaN" {
            if let Ok(v) = s.parse::<f64>() {
                return Cell::Float(v);
            }
        }
        Cell::Text(s.to_string())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Text(s) => f.write_str(s),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) if v.is_finite() => write!(f, "{v:.16e}"),
            Cell::Float(v) => write!(f, "{v}"),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

/// A named table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::param(format!("table {} has no column {name:?}", self.name)))
    }

    /// Rows whose text or numeric cells equal the given values.
    pub fn select(&self, filter: &[(&str, &str)]) -> Result<Vec<&Vec<Cell>>> {
        let idx: Vec<(usize, &str)> = filter
            .iter()
            .map(|(c, v)| self.column(c).map(|i| (i, *v)))
            .collect::<Result<_>>()?;
        Ok(self
            .rows
            .iter()
            .filter(|row| {
                idx.iter().all(|&(i, v)| match &row[i] {
                    Cell::Text(s) => s == v,
                    c => v.parse::<f64>().ok() == c.as_f64(),
                })
            })
            .collect())
    }

    /// Numeric column of the selected rows, in table order.
    pub fn values(&self, filter: &[(&str, &str)], column: &str) -> Result<Vec<f64>> {
        let c = self.column(column)?;
        self.select(filter)?
            .into_iter()
            .map(|r| {
                r[c].as_f64()
                    .ok_or_else(|| Error::Format(format!("column {column} is not numeric")))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|c| c.to_string()))
                .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(name: impl Into<String>, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let columns: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            rows.push(rec.iter().map(Cell::parse).collect());
        }
        Ok(Self {
            name: name.into(),
            columns,
            rows,
        })
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Summary of one group of per-replication values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation, `n - 1` denominator; 0 for one value.
    pub std: f64,
    /// Mean of the natural logarithm.
    pub mean_log: f64,
    /// Sample standard deviation of the natural logarithm.
    pub std_log: f64,
    pub count: usize,
}

impl Stats {
    /// Sums run in the given order, so equal inputs give bit-equal output.
    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::param("cannot aggregate an empty group"));
        }
        let (mean, std) = mean_std(v);
        let logs: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        let (mean_log, std_log) = mean_std(&logs);
        Ok(Self {
            mean,
            std,
            mean_log,
            std_log,
            count: v.len(),
        })
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub base_seed: u64,
    pub version: String,
    pub created_utc: String,
    pub files: Vec<String>,
    pub failures: Vec<Failure>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// File names written by [`write_outputs`] besides the tables.
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ASSERTIONS_FILE: &str = "assertions.json";
pub const FAILURES_FILE: &str = "failures.csv";

/// Writes every table as CSV plus the failure list, the assertions and the
/// manifest into `dir` (created if missing). Returns the written paths.
pub fn write_outputs(out: &StudyOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &out.tables {
        let path = dir.join(t.file_name());
        t.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    let path = dir.join(FAILURES_FILE);
    failures_table(&out.failures).write_csv(fs::File::create(&path)?)?;
    written.push(path);

    let path = dir.join(ASSERTIONS_FILE);
    write_json(&path, &out.assertions)?;
    written.push(path);

    let manifest = Manifest {
        config: cfg.clone(),
        base_seed: cfg.base_seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        files: written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        failures: out.failures.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    written.push(path);
    Ok(written)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn failures_table(failures: &[Failure]) -> Table {
    let mut t = Table::new("failures", &["grid", "method", "replication", "message"]);
    for f in failures {
        t.push(vec![
            f.grid.as_str().into(),
            f.method.as_str().into(),
            f.replication.into(),
            f.message.as_str().into(),
        ]);
    }
    t
}

/// Reads the assertions written next to a manifest.
pub fn load_assertions(dir: &Path) -> Result<Vec<Assertion>> {
    let text = fs::read_to_string(dir.join(ASSERTIONS_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
