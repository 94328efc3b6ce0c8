//! Replicated experiment harness.
//!
//! Each study expands its configuration into independent tasks (grid point
//! times replication), runs them on a rayon pool and reduces the results in
//! a fixed order, so the output does not depend on the thread count.

mod config;
mod studies;
mod table;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, SolverSettings, SpectrumMode, Study};
pub use studies::{
    empirical_operator, iterations_to_tolerance, run_method, spearman, spectrum_instance,
    spiked_model, EmpiricalOperator, Method, ReplicationSeeds,
};
pub use table::{
    load_assertions, write_outputs, Cell, Manifest, Stats, Table, ASSERTIONS_FILE, FAILURES_FILE,
    MANIFEST_FILE,
};

use crate::error::{Error, Result};
use crate::rng;

/// A replication that raised an error. It is excluded from the aggregates
/// and listed here instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub grid: String,
    pub method: String,
    pub replication: usize,
    pub message: String,
}

/// A machine-checked ordinal claim about a study's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub id: String,
    pub claim: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub tables: Vec<Table>,
    pub failures: Vec<Failure>,
    pub assertions: Vec<Assertion>,
}

impl StudyOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn assertion(&self, id: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.id == id)
    }
}

/// Seed of replication `r` at grid point `grid` of `study`.
pub fn replication_seed(base_seed: u64, study: Study, grid: usize, r: usize) -> u64 {
    rng::derive_seed(base_seed, &[study.id(), grid as u64, r as u64])
}

/// Runs the configured study on a pool of `cfg.threads` workers.
pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.study {
        Study::Spectrum => studies::run_spectrum(cfg),
        Study::Trajectory => studies::run_trajectory(cfg),
        Study::SampleEfficiency => studies::run_sample_efficiency(cfg),
        Study::RankSweep => studies::run_rank_sweep(cfg),
    })
}

/// One per-replication value belonging to a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub group: Vec<Cell>,
    pub replication: usize,
    pub value: f64,
}

/// Groups records, orders groups canonically (numbers by value, text
/// lexicographically) and summarizes each group in replication order.
pub fn aggregate(records: &[Record]) -> Result<Vec<(Vec<Cell>, Stats)>> {
    if records.is_empty() {
        return Err(Error::param("nothing to aggregate"));
    }
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by(|a, b| cmp_group(&a.group, &b.group).then(a.replication.cmp(&b.replication)));
    let mut out = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && cmp_group(&sorted[end].group, &sorted[start].group) == Ordering::Equal {
            end += 1;
        }
        let vals: Vec<f64> = sorted[start..end].iter().map(|r| r.value).collect();
        out.push((sorted[start].group.clone(), Stats::from_values(&vals)?));
        start = end;
    }
    Ok(out)
}

fn cmp_cell(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
        (Cell::Text(_), _) => Ordering::Greater,
        (_, Cell::Text(_)) => Ordering::Less,
        (x, y) => x
            .as_f64()
            .unwrap_or(f64::NAN)
            .total_cmp(&y.as_f64().unwrap_or(f64::NAN)),
    }
}

fn cmp_group(a: &[Cell], b: &[Cell]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| cmp_cell(x, y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}
