use std::fs;

use eigenmat::covgen::random_rank_k_eigenmatrix;
use eigenmat::rng::derive_seed;
use eigenmat::solver::{init_random, smartpm, SavedReport, SolverOptions};
use eigenmat::theory::{
    check_assumption2, check_contraction, check_monotonicity, check_perturbation, check_rank_trunc_error,
    eigen_gap, iterate_pairs, lemma1_scaling_probe, overlaps, pair_containing, sampled_rho_euv,
    theorem_constants, RHO_RANDOM_PAIRS,
};
use eigenmat::{matricize, vectorize, Shape, SymmetricMatrix};
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::output::{emit_json, flag, load_symmetric, opt_flag, resolve_shape, summary};

pub fn run(p: &Probe, strict: bool) -> CliResult {
    let holds = match p {
        Probe::Constants(a) => constants(a)?,
        Probe::Lemma1(a) => lemma1(a)?,
        Probe::Monotonicity(a) => monotonicity(a)?,
        Probe::Contraction(a) => contraction(a)?,
        Probe::Assumption2(a) => assumption2(a)?,
        Probe::Perturbation(a) => perturbation(a)?,
        Probe::RankTrunc(a) => rank_trunc(a)?,
    };
    if strict && !holds {
        return Err(CliError::failure("the checked bound does not hold"));
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

fn constants(a: &ConstantsArgs) -> CliResult<bool> {
    let c = theorem_constants(a.lambda, a.gap, a.rho, a.k, a.kbar, a.theta)?;
    emit_json(&c, a.out.output.as_deref())?;
    summary(
        "theorem constants",
        &[
            ("gamma", fmt(c.gamma)),
            ("kappa", fmt(c.kappa)),
            ("delta", fmt(c.delta)),
            ("mu", fmt(c.mu)),
            ("kappa > 2", flag(c.kappa_gt_2)),
            ("mu < 1", flag(c.mu_lt_1)),
        ],
    );
    Ok(true)
}

fn lemma1(a: &Lemma1Args) -> CliResult<bool> {
    let ks = if a.k.is_empty() {
        std::iter::successors(Some(1usize), |k| Some(k * 2))
            .take_while(|&k| k <= a.p)
            .collect()
    } else {
        a.k.clone()
    };
    let r = lemma1_scaling_probe(a.p, &ks, a.trials, a.seed)?;
    emit_json(&r, a.out.output.as_deref())?;
    let mut rows: Vec<(String, String)> = r
        .rows
        .iter()
        .map(|row| (format!("k = {}", row.k), format!("{} +- {}", fmt(row.mean_ratio), fmt(row.std_ratio))))
        .collect();
    rows.push(("slope".into(), format!("{:.4}", r.slope)));
    rows.push(("monotone".into(), flag(r.monotone)));
    let view: Vec<(&str, String)> = rows.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    summary(&format!("rho(E_UV) / rho(E), p = {}", r.p), &view);
    Ok(true)
}

fn monotonicity(a: &MonotonicityArgs) -> CliResult<bool> {
    let text = fs::read_to_string(&a.report).map_err(|e| CliError::input(&a.report, e))?;
    let saved: SavedReport = serde_json::from_str(&text).map_err(|e| CliError::input(&a.report, e))?;
    let mat = match &a.matrix {
        Some(p) => Some(load_symmetric(p)?),
        None => None,
    };
    let r = check_monotonicity(&saved.trajectory, mat.as_ref(), a.from_t)?;
    emit_json(&r, a.out.output.as_deref())?;
    summary(
        "monotonicity of Q_t",
        &[
            ("monotone", flag(r.monotone)),
            ("first violation", r.first_violation.map_or("none".into(), |t| t.to_string())),
            ("comparisons", r.comparisons.to_string()),
            ("A is PSD", opt_flag(r.psd_hypothesis)),
        ],
    );
    Ok(r.monotone)
}

struct Loaded {
    a: SymmetricMatrix,
    abar: SymmetricMatrix,
    shape: Shape,
}

fn load_instance(i: &Instance) -> CliResult<Loaded> {
    let a = load_symmetric(&i.matrix)?;
    let abar = load_symmetric(&i.truth)?;
    if a.dim() != abar.dim() {
        return Err(CliError::usage(format!(
            "--matrix has dimension {} but --truth has {}",
            a.dim(),
            abar.dim()
        )));
    }
    let shape = resolve_shape(i.shape, a.dim())?;
    Ok(Loaded { a, abar, shape })
}

fn contraction(args: &ContractionArgs) -> CliResult<bool> {
    let Loaded { a, abar, shape } = load_instance(&args.instance)?;
    shape.check_rank(args.k)?;
    let e = a.sub(&abar)?;
    let gap = eigen_gap(&abar)?;
    let (_, top) = abar.top_eigenpair()?;
    let xbar = matricize(&top, shape)?.normalized()?;
    let kbar = xbar.numerical_rank()?;

    let mut opts = SolverOptions::new(args.k).recording();
    opts.record_iterates = true;
    opts.max_iterations = args.max_iter;
    opts.stop_on_convergence = false;
    let x0 = args.init.build(&a, shape, args.k, args.seed)?;
    let run = smartpm(&a, &x0, &opts, Some(&xbar))?;

    let pairs = iterate_pairs(&run.iterates, args.k)?;
    let rho = sampled_rho_euv(&e, shape, args.k, &pairs, RHO_RANDOM_PAIRS, args.seed)?;
    let c = theorem_constants(gap.lambda, gap.gap, rho, args.k, kbar.min(args.k), args.theta)?;
    let ov = overlaps(&run, &xbar)?;
    let r = check_contraction(&ov, &c)?;
    let report = json!({
        "eigen_gap": gap,
        "constants": c,
        "iterations": run.iterations,
        "overlaps": ov,
        "contraction": r,
    });
    emit_json(&report, args.out.output.as_deref())?;
    summary(
        "contraction",
        &[
            ("kappa", fmt(c.kappa)),
            ("mu", fmt(c.mu)),
            ("hypotheses met", flag(r.hypotheses_met)),
            ("cumulative bound", opt_flag(r.cumulative_holds)),
            ("per-step bound", opt_flag(r.per_step_holds)),
            ("steps checked", r.steps_checked.to_string()),
        ],
    );
    Ok(r.cumulative_holds != Some(false) && r.per_step_holds != Some(false))
}

fn assumption2(args: &Assumption2Args) -> CliResult<bool> {
    let Loaded { a, abar, shape } = load_instance(&args.instance)?;
    let r = check_assumption2(&a.sub(&abar)?, shape)?;
    emit_json(&r, args.out.output.as_deref())?;
    summary(
        "noise eigenmatrix flatness (p max sigma^2)",
        &[
            ("median", fmt(r.median_flatness)),
            ("min", fmt(r.min_flatness)),
            ("max", fmt(r.max_flatness)),
            ("rank deficient", r.rank_deficient.to_string()),
        ],
    );
    Ok(true)
}

fn perturbation(args: &PerturbationArgs) -> CliResult<bool> {
    let Loaded { a, abar, shape } = load_instance(&args.instance)?;
    let (_, top) = abar.top_eigenpair()?;
    let xbar = matricize(&top, shape)?.normalized()?;
    let pair = pair_containing(&xbar, args.k, args.seed)?;
    let r = check_perturbation(&abar, &a.sub(&abar)?, &pair)?;
    emit_json(&r, args.out.output.as_deref())?;
    summary(
        "perturbation",
        &[
            ("kappa", fmt(r.kappa)),
            ("hypotheses met", flag(r.hypotheses_met)),
            ("ratio <= gamma", format!("{} <= {}  {}", fmt(r.measured_ratio), fmt(r.gamma_bound), flag(r.gamma_holds))),
            ("distance <= delta", format!("{} <= {}  {}", fmt(r.eigvec_distance), fmt(r.delta_bound), flag(r.delta_holds))),
        ],
    );
    Ok(!r.hypotheses_met || (r.gamma_holds && r.delta_holds))
}

/// Random unit vectors with overlaps spread over (0, 1) against a random
/// rank-`kbar` ground truth.
fn rank_trunc(args: &RankTruncArgs) -> CliResult<bool> {
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be positive"));
    }
    args.shape.check_rank(args.k)?;
    let xbar = random_rank_k_eigenmatrix(args.shape, args.kbar, args.seed)?;
    let x = vectorize(&xbar);
    let mut checks = Vec::with_capacity(args.trials);
    for i in 0..args.trials {
        let g = vectorize(&init_random(args.shape, derive_seed(args.seed, &[i as u64]))?);
        let w = (i as f64 + 0.5) / args.trials as f64;
        let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y: Vec<f64> = y.iter().map(|v| v / n).collect();
        checks.push(check_rank_trunc_error(&y, &xbar, args.k)?);
    }
    let appendix = checks.iter().filter(|c| c.holds_appendix).count();
    let main_text = checks.iter().filter(|c| c.holds_main_text).count();
    let report = json!({
        "shape": args.shape.to_string(),
        "kbar": args.kbar,
        "k": args.k,
        "trials": args.trials,
        "holds_appendix": appendix,
        "holds_main_text": main_text,
        "checks": checks,
    });
    emit_json(&report, args.out.output.as_deref())?;
    summary(
        "rank truncation error bound",
        &[
            ("factor (kbar/k)^(1/2)", format!("{appendix}/{}", args.trials)),
            ("factor (kbar/k)^(-1/2)", format!("{main_text}/{}", args.trials)),
        ],
    );
    Ok(appendix == args.trials)
}
