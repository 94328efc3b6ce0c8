//! The four studies and the per-replication building blocks they share.

use rayon::prelude::*;

use super::config::{ExperimentConfig, SolverSettings, SpectrumMode, Study};
use super::table::Table;
use super::{aggregate, replication_seed, Assertion, Cell, Failure, Record, StudyOutput};
use crate::covgen::{
    empirical_cov, make_spiked, random_rank_k_eigenmatrix, CovarianceSpec, Family, GramOperator,
    Noise, SampleSet, SpikedModel,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::solver::{
    estimation_error, init_random, power_method, smartpm, top_eigenvector, top_eigenvector_op,
    Init, LinearOperator, SolveReport, SolverOptions,
};
use crate::symmetric::SymmetricMatrix;
use crate::tensorops::{matricize, vectorize, EigenMatrix, Shape};

/// Seeds used inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationSeeds {
    pub xbar: u64,
    pub samples: u64,
    pub init: u64,
}

impl ReplicationSeeds {
    pub fn new(cfg: &ExperimentConfig, grid: usize, r: usize) -> Self {
        let s = replication_seed(cfg.base_seed, cfg.study, grid, r);
        let xbar = if cfg.fresh_xbar {
            rng::derive_seed(s, &[1])
        } else {
            rng::derive_seed(cfg.base_seed, &[cfg.study.id(), grid as u64, 1])
        };
        Self {
            xbar,
            samples: rng::derive_seed(s, &[2]),
            init: rng::derive_seed(s, &[3]),
        }
    }
}

/// `lambda1 xbar xbar^T + lambda2 I` with a fresh rank-`kbar` ground truth.
pub fn spiked_model(shape: Shape, lambda1: f64, lambda2: f64, kbar: usize, seed: u64) -> Result<SpikedModel> {
    let xbar = random_rank_k_eigenmatrix(shape, kbar, seed)?;
    let noise = if lambda2 == 1.0 {
        Noise::Identity
    } else {
        Noise::Explicit(SymmetricMatrix::identity(shape.dim()).scaled(lambda2))
    };
    make_spiked(lambda1, xbar, noise)
}

/// The empirical covariance, either formed densely or applied through the
/// samples when that is cheaper (`2n < d`).
pub enum EmpiricalOperator {
    Dense(SymmetricMatrix),
    Gram(SampleSet),
}

impl LinearOperator for EmpiricalOperator {
    fn dim(&self) -> usize {
        match self {
            EmpiricalOperator::Dense(a) => a.dim(),
            EmpiricalOperator::Gram(s) => s.dim(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            EmpiricalOperator::Dense(a) => a.apply(x, y),
            EmpiricalOperator::Gram(s) => GramOperator::new(s).expect("nonempty samples").apply(x, y),
        }
    }
}

pub fn empirical_operator(samples: SampleSet) -> Result<EmpiricalOperator> {
    if samples.n() == 0 {
        return Err(Error::param("empirical covariance of zero samples"));
    }
    if 2 * samples.n() < samples.dim() {
        Ok(EmpiricalOperator::Gram(samples))
    } else {
        Ok(EmpiricalOperator::Dense(empirical_cov(&samples)?))
    }
}

fn prefix(samples: &SampleSet, n: usize) -> SampleSet {
    SampleSet {
        data: samples.data.subrows(0, n).to_owned(),
        seed: samples.seed,
        spec: samples.spec.clone(),
    }
}

/// SMART-PM with one of the initializations, or the vector power method
/// started from the same random matrix as [`Init::Random`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SmartPm(Init),
    Power,
}

impl Method {
    pub fn method_name(self) -> &'static str {
        match self {
            Method::SmartPm(_) => "smartpm",
            Method::Power => "power",
        }
    }

    pub fn init_name(self) -> &'static str {
        match self {
            Method::SmartPm(i) => i.name(),
            Method::Power => Init::Random.name(),
        }
    }

    fn label(self) -> String {
        format!("{}/{}", self.method_name(), self.init_name())
    }

    fn list(cfg: &ExperimentConfig) -> Vec<Method> {
        let mut v: Vec<Method> = cfg.inits.iter().map(|&i| Method::SmartPm(i)).collect();
        if cfg.power_method {
            v.push(Method::Power);
        }
        v
    }
}

/// One run against the reference `xbar`. The trajectory holds errors when
/// `record` is set.
pub fn run_method(
    op: &dyn LinearOperator,
    shape: Shape,
    method: Method,
    k: usize,
    init_seed: u64,
    settings: &SolverSettings,
    xbar: &EigenMatrix,
    record: bool,
) -> Result<SolveReport> {
    let opts = SolverOptions {
        max_iterations: settings.max_iterations,
        tolerance: settings.tolerance,
        rank: k,
        record_trajectory: record,
        record_iterates: false,
        stop_on_convergence: settings.stop_on_convergence,
    };
    match method {
        Method::SmartPm(init) => {
            let x0 = init.build_op(op, shape, k, init_seed)?;
            smartpm(op, &x0, &opts, Some(xbar))
        }
        Method::Power => {
            let x0 = vectorize(&init_random(shape, init_seed)?);
            power_method(op, &x0, shape, &opts, Some(xbar))
        }
    }
}

fn final_error(rep: &SolveReport, xbar: &EigenMatrix) -> Result<f64> {
    let e = estimation_error(&rep.final_iterate, xbar)?;
    if !e.is_finite() {
        return Err(Error::numerical("non-finite estimation error"));
    }
    Ok(e)
}

/// First `t >= 1` whose change is below `tol`; the run length if none.
pub fn iterations_to_tolerance(rep: &SolveReport, tol: f64) -> usize {
    rep.trajectory
        .iter()
        .skip(1)
        .find(|p| p.delta < tol)
        .map_or(rep.iterations, |p| p.t)
}

/// Singular values of the matricized top eigenvector divided by the
/// largest, for one instance of a structured family.
pub fn spectrum_instance(
    family: Family,
    shape: Shape,
    mode: SpectrumMode,
    sample_factor: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut spec = CovarianceSpec::new(family, shape.dim(), rng::derive_seed(seed, &[1]));
    if family == Family::Kronecker {
        // the Kronecker generator matricizes as p2 x p1
        spec.params.p1 = Some(shape.cols());
        spec.params.p2 = Some(shape.rows());
    }
    let v = match mode {
        SpectrumMode::Population => top_eigenvector(&spec.build()?)?,
        SpectrumMode::Sampled => {
            let n = sample_factor * shape.dim();
            let samples = spec.sampler()?.sample(n, rng::derive_seed(seed, &[2]))?;
            top_eigenvector_op(&GramOperator::new(&samples)?)?
        }
    };
    let s = matricize(&v, shape)?.singular_values()?;
    if !(s[0] > 0.0) {
        return Err(Error::Degenerate("zero top eigenvector".into()));
    }
    Ok(s.iter().map(|x| x / s[0]).collect())
}

fn grid_label(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn tasks(grid: usize, reps: usize) -> Vec<(usize, usize)> {
    (0..grid).flat_map(|g| (0..reps).map(move |r| (g, r))).collect()
}

pub(crate) fn run_spectrum(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let results: Vec<Result<Vec<f64>>> = tasks(cfg.families.len(), cfg.replications)
        .into_par_iter()
        .map(|(g, r)| {
            let seed = replication_seed(cfg.base_seed, Study::Spectrum, g, r);
            spectrum_instance(cfg.families[g], cfg.shape, cfg.spectrum_mode, cfg.sample_factor, seed)
        })
        .collect();
    let mut table = Table::new("spectrum", &["family", "index", "mean_sigma", "std_sigma", "instances"]);
    let mut failures = Vec::new();
    let mut assertions = Vec::new();
    for (g, family) in cfg.families.iter().enumerate() {
        let mut recs = Vec::new();
        for r in 0..cfg.replications {
            match &results[g * cfg.replications + r] {
                Ok(s) => recs.extend(s.iter().enumerate().map(|(i, &v)| Record {
                    group: vec![(i + 1).into()],
                    replication: r,
                    value: v,
                })),
                Err(e) => failures.push(Failure {
                    grid: grid_label(&[("family", family.name().to_string())]),
                    method: "spectrum".into(),
                    replication: r,
                    message: e.to_string(),
                }),
            }
        }
        log::info!("spectrum {family}: {} instances", cfg.replications);
        if recs.is_empty() {
            continue;
        }
        for (key, st) in aggregate(&recs)? {
            if *family == Family::Toeplitz && key[0] == Cell::Int(2) {
                assertions.push(Assertion {
                    id: "spectrum.toeplitz_second_sigma_small".into(),
                    claim: "Toeplitz top eigenmatrix has mean normalized sigma_2 <= 0.10".into(),
                    holds: st.mean <= 0.10,
                    detail: format!("mean sigma_2 / sigma_1 = {:.4} (std {:.4})", st.mean, st.std),
                });
            }
            table.push(vec![family.name().into(), key[0].clone(), st.mean.into(), st.std.into(), st.count.into()]);
        }
    }
    Ok(StudyOutput {
        tables: vec![table],
        failures,
        assertions,
    })
}

/// Per-method outcome of one replication.
type MethodResults = Vec<(Method, Result<SolveReport>)>;

/// Builds the operator of one replication, or the exact model covariance
/// in the noiseless variant.
fn replication_operator(
    cfg: &ExperimentConfig,
    model: &SpikedModel,
    samples: Option<&SampleSet>,
    n: usize,
) -> Result<EmpiricalOperator> {
    match samples {
        None => Ok(EmpiricalOperator::Dense(model.covariance.clone())),
        Some(s) if cfg.noiseless => unreachable!("samples drawn in noiseless mode: {}", s.n()),
        Some(s) => empirical_operator(if s.n() == n { s.clone() } else { prefix(s, n) }),
    }
}

fn draw(cfg: &ExperimentConfig, model: &SpikedModel, n: usize, seed: u64) -> Result<Option<SampleSet>> {
    if cfg.noiseless {
        Ok(None)
    } else {
        model.sample(n, seed).map(Some)
    }
}

pub(crate) fn run_trajectory(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let methods = Method::list(cfg);
    let (n, k) = (cfg.n[0], cfg.k[0]);
    let results: Vec<(Option<EigenMatrix>, std::result::Result<MethodResults, String>)> =
        tasks(cfg.lambda1.len(), cfg.replications)
            .into_par_iter()
            .map(|(g, r)| {
                let seeds = ReplicationSeeds::new(cfg, g, r);
                let setup = spiked_model(cfg.shape, cfg.lambda1[g], cfg.lambda2, cfg.kbar, seeds.xbar)
                    .and_then(|m| {
                        let s = draw(cfg, &m, n, seeds.samples)?;
                        let op = replication_operator(cfg, &m, s.as_ref(), n)?;
                        Ok((m, op))
                    });
                match setup {
                    Err(e) => (None, Err(e.to_string())),
                    Ok((m, op)) => {
                        let runs = methods
                            .iter()
                            .map(|&me| {
                                (me, run_method(&op, cfg.shape, me, k, seeds.init, &cfg.solver, &m.xbar, true))
                            })
                            .collect();
                        (Some(m.xbar), Ok(runs))
                    }
                }
            })
            .collect();

    let mut tables = Vec::new();
    let mut failures = Vec::new();
    // mean iterations-to-tolerance per (method, lambda index)
    let mut iters = vec![vec![f64::NAN; cfg.lambda1.len()]; methods.len()];
    let mut top_vs_power = Vec::new();
    for (g, &lambda1) in cfg.lambda1.iter().enumerate() {
        let grid = grid_label(&[("lambda1", fmt_num(lambda1)), ("n", n.to_string()), ("k", k.to_string())]);
        let mut recs = Vec::new();
        let mut hits: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
        for r in 0..cfg.replications {
            let (_, res) = &results[g * cfg.replications + r];
            let runs = match res {
                Ok(runs) => runs,
                Err(msg) => {
                    for me in &methods {
                        failures.push(Failure {
                            grid: grid.clone(),
                            method: me.label(),
                            replication: r,
                            message: msg.clone(),
                        });
                    }
                    continue;
                }
            };
            for (mi, (me, rep)) in runs.iter().enumerate() {
                let rep = match rep {
                    Ok(rep) => rep,
                    Err(e) => {
                        failures.push(Failure {
                            grid: grid.clone(),
                            method: me.label(),
                            replication: r,
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                hits[mi].push(iterations_to_tolerance(rep, cfg.solver.tolerance) as f64);
                let errs: Vec<f64> = rep.trajectory.iter().filter_map(|p| p.error).collect();
                // runs that stopped early hold their last error
                let last = *errs.last().unwrap_or(&f64::NAN);
                for t in 0..=cfg.solver.max_iterations {
                    recs.push(Record {
                        group: vec![mi.into(), t.into()],
                        replication: r,
                        value: errs.get(t).copied().unwrap_or(last),
                    });
                }
            }
            if let (Some(top), Some(pw)) = (
                methods.iter().position(|&m| m == Method::SmartPm(Init::TopEigenmatrix)),
                methods.iter().position(|&m| m == Method::Power),
            ) {
                if let (Ok(a), Ok(b)) = (&runs[top].1, &runs[pw].1) {
                    top_vs_power.push((g, not_slower(a, b)));
                }
            }
        }
        for (mi, h) in hits.iter().enumerate() {
            if !h.is_empty() {
                iters[mi][g] = h.iter().sum::<f64>() / h.len() as f64;
            }
        }
        let mut table = Table::new(
            format!("trajectory_lambda1_{}", fmt_num(lambda1)),
            &["method", "init", "lambda1", "t", "mean_log_error", "std_log_error"],
        );
        if !recs.is_empty() {
            for (key, st) in aggregate(&recs)? {
                let me = methods[key[0].as_f64().expect("index") as usize];
                table.push(vec![
                    me.method_name().into(),
                    me.init_name().into(),
                    lambda1.into(),
                    key[1].clone(),
                    st.mean_log.into(),
                    st.std_log.into(),
                ]);
            }
        }
        log::info!("trajectory {grid}: done");
        tables.push(table);
    }

    let mut assertions = Vec::new();
    if let Some(gmax) = (0..cfg.lambda1.len()).max_by(|&a, &b| cfg.lambda1[a].total_cmp(&cfg.lambda1[b])) {
        let v: Vec<bool> = top_vs_power.iter().filter(|(g, _)| *g == gmax).map(|(_, ok)| *ok).collect();
        if !v.is_empty() {
            let frac = v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
            assertions.push(Assertion {
                id: "trajectory.top_init_not_slower_than_power".into(),
                claim: "at the largest lambda1, SMART-PM from the top eigenmatrix reaches every error level \
                        the power method reaches no later, in at least 90% of replications"
                    .into(),
                holds: frac >= 0.9,
                detail: format!("fraction {frac:.3} over {} replications", v.len()),
            });
        }
    }
    let mut order: Vec<usize> = (0..cfg.lambda1.len()).collect();
    order.sort_by(|&a, &b| cfg.lambda1[a].total_cmp(&cfg.lambda1[b]));
    let mut ok = true;
    let mut detail = Vec::new();
    for (mi, me) in methods.iter().enumerate() {
        let seq: Vec<f64> = order.iter().map(|&g| iters[mi][g]).collect();
        ok &= seq.windows(2).all(|w| w[1] < w[0]);
        detail.push(format!("{}: {:?}", me.label(), seq));
    }
    if cfg.lambda1.len() > 1 {
        assertions.push(Assertion {
            id: "trajectory.faster_with_larger_gap".into(),
            claim: "mean iterations to tolerance strictly decrease as lambda1 grows, for every method".into(),
            holds: ok,
            detail: detail.join("; "),
        });
    }
    Ok(StudyOutput {
        tables,
        failures,
        assertions,
    })
}

const ERROR_LEVELS: [f64; 7] = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01];

/// Whether `a` reaches each level of [`ERROR_LEVELS`] that `b` reaches, at
/// an iteration no later than `b`.
fn not_slower(a: &SolveReport, b: &SolveReport) -> bool {
    let first = |rep: &SolveReport, level: f64| {
        rep.trajectory
            .iter()
            .find(|p| p.error.is_some_and(|e| e <= level))
            .map(|p| p.t)
    };
    ERROR_LEVELS.iter().all(|&l| match (first(a, l), first(b, l)) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(ta), Some(tb)) => ta <= tb,
    })
}

type FinalErrors = Vec<Vec<(Method, Result<f64>)>>;

pub(crate) fn run_sample_efficiency(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let methods = Method::list(cfg);
    let k = cfg.k[0];
    let n_max = *cfg.n.iter().max().expect("validated");
    // one draw of n_max rows per replication; smaller n use its leading rows
    let results: Vec<std::result::Result<FinalErrors, String>> = tasks(cfg.lambda1.len(), cfg.replications)
        .into_par_iter()
        .map(|(g, r)| {
            let seeds = ReplicationSeeds::new(cfg, g, r);
            let m = spiked_model(cfg.shape, cfg.lambda1[g], cfg.lambda2, cfg.kbar, seeds.xbar)
                .map_err(|e| e.to_string())?;
            let samples = draw(cfg, &m, n_max, seeds.samples).map_err(|e| e.to_string())?;
            Ok(cfg
                .n
                .iter()
                .map(|&n| match replication_operator(cfg, &m, samples.as_ref(), n) {
                    Err(e) => {
                        let msg = e.to_string();
                        methods.iter().map(|&me| (me, Err(Error::numerical(msg.clone())))).collect()
                    }
                    Ok(op) => methods
                        .iter()
                        .map(|&me| {
                            let res = run_method(&op, cfg.shape, me, k, seeds.init, &cfg.solver, &m.xbar, false)
                                .and_then(|rep| final_error(&rep, &m.xbar));
                            (me, res)
                        })
                        .collect(),
                })
                .collect())
        })
        .collect();

    let mut recs = Vec::new();
    let mut failures = Vec::new();
    for (g, &lambda1) in cfg.lambda1.iter().enumerate() {
        for r in 0..cfg.replications {
            match &results[g * cfg.replications + r] {
                Err(msg) => {
                    for &n in &cfg.n {
                        for me in &methods {
                            failures.push(Failure {
                                grid: grid_label(&[("lambda1", fmt_num(lambda1)), ("n", n.to_string())]),
                                method: me.label(),
                                replication: r,
                                message: msg.clone(),
                            });
                        }
                    }
                }
                Ok(per_n) => {
                    for (ni, runs) in per_n.iter().enumerate() {
                        for (me, res) in runs {
                            match res {
                                Ok(e) => recs.push(Record {
                                    group: vec![
                                        me.method_name().into(),
                                        me.init_name().into(),
                                        lambda1.into(),
                                        cfg.n[ni].into(),
                                    ],
                                    replication: r,
                                    value: *e,
                                }),
                                Err(e) => failures.push(Failure {
                                    grid: grid_label(&[("lambda1", fmt_num(lambda1)), ("n", cfg.n[ni].to_string())]),
                                    method: me.label(),
                                    replication: r,
                                    message: e.to_string(),
                                }),
                            }
                        }
                    }
                }
            }
        }
        log::info!("sample_efficiency lambda1={}: done", fmt_num(lambda1));
    }
    let mut table = Table::new(
        "efficiency",
        &["method", "init", "lambda1", "n", "mean_error", "std_error", "mean_log_error", "count"],
    );
    if !recs.is_empty() {
        for (key, st) in aggregate(&recs)? {
            let mut row = key;
            row.extend([st.mean.into(), st.std.into(), st.mean_log.into(), st.count.into()]);
            table.push(row);
        }
    }
    let assertions = efficiency_assertions(&table, cfg, &methods)?;
    Ok(StudyOutput {
        tables: vec![table],
        failures,
        assertions,
    })
}

fn efficiency_assertions(table: &Table, cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<Assertion>> {
    let mut lambdas = cfg.lambda1.clone();
    lambdas.sort_by(f64::total_cmp);
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    let mean = |me: Method, l: f64, n: usize| -> Result<Option<f64>> {
        let v = table.values(
            &[
                ("method", me.method_name()),
                ("init", me.init_name()),
                ("lambda1", &fmt_num(l)),
                ("n", &n.to_string()),
            ],
            "mean_error",
        )?;
        Ok(v.first().copied())
    };
    let mut out = Vec::new();

    if methods.contains(&Method::SmartPm(Init::Random)) && methods.contains(&Method::Power) {
        let mut bad = Vec::new();
        for &l in &lambdas {
            for &n in &ns {
                match (mean(Method::SmartPm(Init::Random), l, n)?, mean(Method::Power, l, n)?) {
                    (Some(a), Some(b)) if a <= b => {}
                    (a, b) => bad.push(format!("lambda1={l},n={n}: {a:?} vs {b:?}")),
                }
            }
        }
        out.push(Assertion {
            id: "efficiency.smartpm_random_le_power".into(),
            claim: "SMART-PM from a random start has mean error no larger than the power method at every grid point"
                .into(),
            holds: bad.is_empty(),
            detail: bad.join("; "),
        });
    }

    let mut bad = Vec::new();
    for &me in methods {
        for &l in &lambdas {
            let seq: Vec<Option<f64>> = ns.iter().map(|&n| mean(me, l, n)).collect::<Result<_>>()?;
            if !strictly_decreasing(&seq) {
                bad.push(format!("{} lambda1={l}: {seq:?}", me.label()));
            }
        }
    }
    out.push(Assertion {
        id: "efficiency.decreasing_in_n".into(),
        claim: "mean error strictly decreases along the n grid for every lambda1 and method".into(),
        holds: bad.is_empty(),
        detail: bad.join("; "),
    });

    let mut bad = Vec::new();
    for &me in methods {
        for &n in &ns {
            let seq: Vec<Option<f64>> = lambdas.iter().map(|&l| mean(me, l, n)).collect::<Result<_>>()?;
            if !strictly_decreasing(&seq) {
                bad.push(format!("{} n={n}: {seq:?}", me.label()));
            }
        }
    }
    out.push(Assertion {
        id: "efficiency.decreasing_in_gap".into(),
        claim: "mean error strictly decreases as lambda1 grows for every n and method".into(),
        holds: bad.is_empty(),
        detail: bad.join("; "),
    });
    Ok(out)
}

fn strictly_decreasing(seq: &[Option<f64>]) -> bool {
    seq.iter().all(Option::is_some)
        && seq.windows(2).all(|w| w[1].expect("checked") < w[0].expect("checked"))
}

pub(crate) fn run_rank_sweep(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let init = cfg.inits.first().copied();
    let (n, lambda1) = (cfg.n[0], cfg.lambda1[0]);
    let results: Vec<std::result::Result<(Vec<Result<f64>>, Option<Result<f64>>), String>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let seeds = ReplicationSeeds::new(cfg, 0, r);
            let m = spiked_model(cfg.shape, lambda1, cfg.lambda2, cfg.kbar, seeds.xbar).map_err(|e| e.to_string())?;
            let samples = draw(cfg, &m, n, seeds.samples).map_err(|e| e.to_string())?;
            let op = replication_operator(cfg, &m, samples.as_ref(), n).map_err(|e| e.to_string())?;
            let run = |me: Method, k: usize| {
                run_method(&op, cfg.shape, me, k, seeds.init, &cfg.solver, &m.xbar, false)
                    .and_then(|rep| final_error(&rep, &m.xbar))
            };
            let sm = match init {
                Some(i) => cfg.k.iter().map(|&k| run(Method::SmartPm(i), k)).collect(),
                None => Vec::new(),
            };
            let pw = cfg.power_method.then(|| run(Method::Power, 1));
            Ok((sm, pw))
        })
        .collect();

    let grid = grid_label(&[("lambda1", fmt_num(lambda1)), ("n", n.to_string())]);
    let mut recs = Vec::new();
    let mut failures = Vec::new();
    let mut fail = |method: String, r: usize, message: String| {
        failures.push(Failure {
            grid: grid.clone(),
            method,
            replication: r,
            message,
        })
    };
    for (r, res) in results.iter().enumerate() {
        match res {
            Err(msg) => {
                if let Some(i) = init {
                    fail(Method::SmartPm(i).label(), r, msg.clone());
                }
                if cfg.power_method {
                    fail(Method::Power.label(), r, msg.clone());
                }
            }
            Ok((sm, pw)) => {
                for (ki, e) in sm.iter().enumerate() {
                    match e {
                        Ok(e) => recs.push(Record {
                            group: vec!["smartpm".into(), cfg.k[ki].into()],
                            replication: r,
                            value: *e,
                        }),
                        Err(e) => fail(format!("smartpm/k={}", cfg.k[ki]), r, e.to_string()),
                    }
                }
                match pw {
                    Some(Ok(e)) => {
                        // the power method does not depend on k; repeat it as a baseline
                        for &k in &cfg.k {
                            recs.push(Record {
                                group: vec!["power".into(), k.into()],
                                replication: r,
                                value: *e,
                            });
                        }
                    }
                    Some(Err(e)) => fail(Method::Power.label(), r, e.to_string()),
                    None => {}
                }
            }
        }
    }
    log::info!("rank_sweep {grid}: done");
    let mut table = Table::new("ranksweep", &["method", "k", "mean_error", "std_error", "count"]);
    if !recs.is_empty() {
        for (key, st) in aggregate(&recs)? {
            let mut row = key;
            row.extend([st.mean.into(), st.std.into(), st.count.into()]);
            table.push(row);
        }
    }
    let assertions = if init.is_some() && cfg.power_method {
        rank_sweep_assertions(&table, cfg)?
    } else {
        Vec::new()
    };
    Ok(StudyOutput {
        tables: vec![table],
        failures,
        assertions,
    })
}

fn rank_sweep_assertions(table: &Table, cfg: &ExperimentConfig) -> Result<Vec<Assertion>> {
    let mut ks = cfg.k.clone();
    ks.sort_unstable();
    let get = |method: &str, k: usize, col: &str| -> Result<Option<f64>> {
        Ok(table.values(&[("method", method), ("k", &k.to_string())], col)?.first().copied())
    };
    let mut out = Vec::new();
    let kmax = *ks.last().expect("validated");
    let kmin = ks[0];
    if kmax == cfg.shape.max_rank() {
        let (s, p) = (get("smartpm", kmax, "mean_error")?, get("power", kmax, "mean_error")?);
        let holds = matches!((s, p), (Some(s), Some(p)) if (s - p).abs() <= 0.05 * p);
        out.push(Assertion {
            id: "rank_sweep.full_rank_matches_power".into(),
            claim: "at k = p SMART-PM mean error is within 5% of the power method".into(),
            holds,
            detail: format!("smartpm {s:?}, power {p:?}"),
        });
    }
    let means: Vec<Option<f64>> = ks.iter().map(|&k| get("smartpm", k, "mean_error")).collect::<Result<_>>()?;
    if means.iter().all(Option::is_some) && ks.len() > 1 {
        let m: Vec<f64> = means.iter().map(|v| v.expect("checked")).collect();
        let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        let rho = spearman(&kf, &m);
        out.push(Assertion {
            id: "rank_sweep.error_trend_in_k".into(),
            claim: "Spearman correlation of k and SMART-PM mean error is positive".into(),
            holds: rho > 0.0,
            detail: format!("spearman {rho:.4}; means {m:?}"),
        });
        let (a, b) = (get("smartpm", kmin, "std_error")?, get("smartpm", kmax, "std_error")?);
        out.push(Assertion {
            id: "rank_sweep.spread_grows_with_k".into(),
            claim: "SMART-PM error standard deviation is larger at the largest k than at the smallest".into(),
            holds: matches!((a, b), (Some(a), Some(b)) if b > a),
            detail: format!("std at k={kmin}: {a:?}, at k={kmax}: {b:?}"),
        });
    }
    let mut bad = Vec::new();
    for &k in &ks {
        match (get("smartpm", k, "mean_error")?, get("power", k, "mean_error")?) {
            (Some(s), Some(p)) if s <= p => {}
            (s, p) => bad.push(format!("k={k}: {s:?} vs {p:?}")),
        }
    }
    out.push(Assertion {
        id: "rank_sweep.smartpm_le_power".into(),
        claim: "SMART-PM mean error is no larger than the power method at every k".into(),
        holds: bad.is_empty(),
        detail: bad.join("; "),
    });
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
