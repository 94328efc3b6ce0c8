use std::fs;
use std::path::{Path, PathBuf};

use eigenmat::experiment::{run_study, write_outputs, ExperimentConfig, Manifest};
use serde_json::{Map, Value};

use crate::args::ExperimentArgs;
use crate::error::{CliError, CliResult};
use crate::output::summary;

/// Precedence: study defaults, then the config file (or replayed manifest),
/// then flags. Everything is validated before any computation starts.
pub fn run(a: &ExperimentArgs, threads: Option<usize>, strict: bool) -> CliResult {
    let mut obj = base_config(a)?;
    let mut set = |key: &str, v: Value| {
        obj.insert(key.to_string(), v);
    };
    if let Some(r) = a.replications {
        set("replications", r.into());
    }
    if let Some(s) = a.seed {
        set("base_seed", s.into());
    }
    if let Some(s) = a.shape {
        set("shape", serde_json::to_value(s)?);
    }
    if !a.lambda1.is_empty() {
        set("lambda1", serde_json::to_value(&a.lambda1)?);
    }
    if !a.k.is_empty() {
        set("k", serde_json::to_value(&a.k)?);
    }
    if !a.n.is_empty() {
        set("n", serde_json::to_value(&a.n)?);
    }
    if !a.inits.is_empty() {
        set("inits", serde_json::to_value(&a.inits)?);
    }
    if let Some(t) = threads {
        set("threads", t.into());
    }
    if let Some(m) = a.max_iter {
        let mut solver = match obj.remove("solver") {
            Some(Value::Object(s)) => s,
            _ => Map::new(),
        };
        solver.insert("max_iterations".into(), m.into());
        obj.insert("solver".into(), Value::Object(solver));
    }
    let mut cfg = ExperimentConfig::from_value(Value::Object(obj), Some(a.study))?;

    let dir = match (&a.output, &cfg.output) {
        (Some(d), _) | (None, Some(d)) => d.clone(),
        (None, None) => default_dir(),
    };
    check_output_dir(&dir, a.force)?;
    cfg.output = Some(dir.clone());

    log::info!(
        "{}: {} tasks on {} threads, output {}",
        cfg.study,
        cfg.task_count(),
        if cfg.threads == 0 { "all".to_string() } else { cfg.threads.to_string() },
        dir.display()
    );
    let out = run_study(&cfg)?;
    write_outputs(&out, &cfg, &dir).map_err(|e| CliError::failure(format!("writing outputs: {e}")))?;

    let rows: Vec<(&str, String)> = out
        .assertions
        .iter()
        .map(|x| {
            let verdict = if x.holds { "holds" } else { "FAILS" };
            (x.id.as_str(), format!("{verdict}  {}", x.detail))
        })
        .collect();
    summary(&format!("{} assertions", cfg.study), &rows);
    if !out.failures.is_empty() {
        log::warn!("{} replications failed; see failures.csv", out.failures.len());
    }
    println!("{}", dir.display());

    let failed = out.assertions.iter().filter(|x| !x.holds).count();
    if strict && (failed > 0 || !out.failures.is_empty()) {
        return Err(CliError::failure(format!(
            "{failed} assertions do not hold, {} replications failed",
            out.failures.len()
        )));
    }
    Ok(())
}

fn base_config(a: &ExperimentArgs) -> CliResult<Map<String, Value>> {
    if let Some(path) = &a.replay {
        let m = Manifest::load(path).map_err(|e| CliError::input(path, e))?;
        let Value::Object(mut obj) = serde_json::to_value(m.config)? else {
            unreachable!("config serializes to an object");
        };
        // a replay writes to a fresh directory unless -o says otherwise
        obj.remove("output");
        return Ok(obj);
    }
    let Some(path) = &a.config else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    match serde_json::from_str(&text).map_err(|e| CliError::input(path, e))? {
        Value::Object(obj) => Ok(obj),
        _ => Err(CliError::input(path, "config must be a JSON object")),
    }
}

fn default_dir() -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let base = Path::new("out");
    let mut dir = base.join(&stamp);
    let mut i = 2;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{i}"));
        i += 1;
    }
    dir
}

fn check_output_dir(dir: &Path, force: bool) -> CliResult {
    if dir.is_file() {
        return Err(CliError::usage(format!("{} is a file", dir.display())));
    }
    let occupied = fs::read_dir(dir).is_ok_and(|mut it| it.next().is_some());
    if occupied && !force {
        return Err(CliError::usage(format!(
            "{} is not empty; pass --force to overwrite",
            dir.display()
        )));
    }
    Ok(())
}
