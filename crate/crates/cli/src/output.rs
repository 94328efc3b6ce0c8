use std::fs;
use std::io::Write;
use std::path::Path;

use eigenmat::{io, Shape, SymmetricMatrix};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Pretty JSON to `path`, or to stdout when no path is given.
pub fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Two-column summary on stderr, so stdout stays machine readable.
pub fn summary(title: &str, rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{title}");
    for (k, v) in rows {
        let _ = writeln!(err, "  {k:<width$}  {v}");
    }
}

pub fn flag(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

pub fn opt_flag(b: Option<bool>) -> String {
    b.map_or_else(|| "n/a".to_string(), flag)
}

pub fn load_symmetric(path: &Path) -> CliResult<SymmetricMatrix> {
    let m = io::load_matrix(path).map_err(|e| CliError::input(path, e))?;
    SymmetricMatrix::new(m).map_err(|e| CliError::input(path, e))
}

/// The explicit shape, or the square one for a perfect-square dimension.
pub fn resolve_shape(shape: Option<Shape>, d: usize) -> CliResult<Shape> {
    match shape {
        Some(s) if s.dim() != d => Err(CliError::usage(format!(
            "--shape {s} has {} entries but the matrix has dimension {d}",
            s.dim()
        ))),
        Some(s) => Ok(s),
        None => Ok(Shape::from_dim(d)?),
    }
}
