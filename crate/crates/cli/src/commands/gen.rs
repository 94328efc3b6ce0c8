use std::fs;
use std::path::PathBuf;

use eigenmat::covgen::{empirical_cov, CovarianceSpec, FamilyParams};
use eigenmat::io;
use serde_json::json;

use crate::args::GenArgs;
use crate::error::{CliError, CliResult};
use crate::output::emit_json;

pub fn run(a: &GenArgs) -> CliResult {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
            serde_json::from_str::<CovarianceSpec>(&text).map_err(|e| CliError::input(path, e))?
        }
        None => CovarianceSpec {
            family: a.family.expect("clap requires --family without --spec"),
            d: None,
            params: FamilyParams::default(),
            seed: 0,
        },
    };
    if let Some(f) = a.family {
        spec.family = f;
    }
    if a.d.is_some() {
        spec.d = a.d;
    }
    let p = &mut spec.params;
    p.r = a.r.or(p.r);
    p.p1 = a.p1.or(p.p1);
    p.p2 = a.p2.or(p.p2);
    p.lambda1 = a.lambda1.or(p.lambda1);
    p.kbar = a.kbar.or(p.kbar);
    spec.seed = a.seed.unwrap_or(spec.seed);

    let m = match a.samples {
        Some(n) => empirical_cov(&spec.sampler()?.sample(n, a.sample_seed)?)?,
        None => spec.build()?,
    };
    let d = m.dim();
    let out = a
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}_{d}.emx1", spec.family)));
    let sidecar = out.with_extension("json");
    if sidecar == out {
        return Err(CliError::usage("the output file must not have a .json extension"));
    }
    let csv = out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if csv {
        io::save_csv(&out, m.as_mat())?;
    } else {
        io::save_emx1(&out, m.as_mat())?;
    }
    let meta = json!({
        "file": out.file_name().map(|n| n.to_string_lossy().into_owned()),
        "format": if csv { "csv" } else { "emx1" },
        "rows": d,
        "cols": d,
        "shape": spec.shape().ok().map(|s| s.to_string()),
        "spec": spec,
        "samples": a.samples,
        "sample_seed": a.samples.map(|_| a.sample_seed),
        "version": env!("CARGO_PKG_VERSION"),
    });
    emit_json(&meta, Some(&sidecar))?;
    log::info!("wrote {} and {}", out.display(), sidecar.display());
    println!("{}", out.display());
    Ok(())
}
