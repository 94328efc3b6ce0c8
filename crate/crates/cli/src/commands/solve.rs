use std::path::Path;

use eigenmat::solver::{init_random, power_method, smartpm, SolverOptions};
use eigenmat::{io, matricize, vectorize, EigenMatrix, Shape};

use crate::args::SolveArgs;
use crate::error::{CliError, CliResult};
use crate::output::{emit_json, flag, load_symmetric, resolve_shape, summary};

pub fn run(a: &SolveArgs, strict: bool) -> CliResult {
    let mat = load_symmetric(&a.matrix)?;
    let shape = resolve_shape(a.shape, mat.dim())?;
    shape.check_rank(a.k)?;
    let reference = match &a.reference {
        Some(p) => Some(load_eigenmatrix(p, shape)?),
        None => None,
    };
    let mut opts = SolverOptions::new(a.k);
    opts.max_iterations = a.max_iter;
    opts.tolerance = a.tol;
    opts.record_trajectory = !a.no_trajectory;

    let report = if a.power {
        let x0 = init_random(shape, a.seed)?;
        power_method(&mat, &vectorize(&x0), shape, &opts, reference.as_ref())?
    } else {
        let x0 = a.init.build(&mat, shape, a.k, a.seed)?;
        smartpm(&mat, &x0, &opts, reference.as_ref())?
    };
    emit_json(&report, a.output.as_deref())?;
    if let Some(p) = &a.save_iterate {
        io::save_emx1(p, report.final_iterate.as_mat())?;
    }

    let mut rows = vec![
        ("iterations", report.iterations.to_string()),
        ("converged", flag(report.converged)),
        ("wall time [s]", format!("{:.3}", report.wall_time)),
    ];
    if let Some(q) = report.trajectory.last() {
        rows.push(("final Q", format!("{:.12e}", q.q)));
    }
    if let Some(e) = report.final_error() {
        rows.push(("final error", format!("{e:.3e}")));
    }
    summary(if a.power { "power method" } else { "SMART-PM" }, &rows);
    if strict && !report.converged {
        return Err(CliError::failure(format!(
            "no convergence within {} iterations",
            a.max_iter
        )));
    }
    Ok(())
}

/// A reference eigenmatrix stored either in its matrix shape or as a
/// `d x 1` / `1 x d` vector.
pub fn load_eigenmatrix(path: &Path, shape: Shape) -> CliResult<EigenMatrix> {
    let m = io::load_matrix(path).map_err(|e| CliError::input(path, e))?;
    let x = if (m.nrows(), m.ncols()) == (shape.rows(), shape.cols()) {
        EigenMatrix::from_mat(m)?
    } else if m.nrows().min(m.ncols()) == 1 && m.nrows() * m.ncols() == shape.dim() {
        let v: Vec<f64> = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        matricize(&v, shape)?
    } else {
        return Err(CliError::input(
            path,
            format!("{}x{} does not match shape {shape}", m.nrows(), m.ncols()),
        ));
    };
    Ok(x.normalized()?)
}
