//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Run everything with `cargo test -p eigenmat --test acceptance`, or a
//! subset by naming criteria: `cargo test -p eigenmat --test acceptance -- c1 c5`.

use std::path::Path;
use std::time::{Duration, Instant};

use eigenmat::covgen::{empirical_cov, make_circulant, random_rank_k_eigenmatrix, Family};
use eigenmat::experiment::{
    run_method, run_study, spectrum_instance, spiked_model, write_outputs, empirical_operator,
    replication_seed, ExperimentConfig, Manifest, Method, ReplicationSeeds, SpectrumMode, Study,
    MANIFEST_FILE,
};
use eigenmat::solver::{
    estimation_error, init_random, init_top_eigenmatrix, smartpm, Init, SolverOptions,
};
use eigenmat::theory::{
    check_contraction, check_monotonicity, check_perturbation, check_rank_trunc_error, eigen_gap,
    gaussian_symmetric, iterate_pairs, lemma1_scaling_probe, overlaps, pair_containing,
    projected_noise_norm, sampled_rho_euv, theorem_constants, PowerStepSetup, RHO_RANDOM_PAIRS,
};
use eigenmat::{matricize, rank_truncate, vectorize, EigenMatrix, ProjectionPair, Shape, SymmetricMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_lowercase())
        .collect();
    let criteria: Vec<Criterion> = vec![
        ("c1", "circulant top eigenmatrix is rank one", Duration::from_secs(5), c1),
        ("c2", "Toeplitz sampled spectrum: mean sigma_2 <= 0.10", minutes(10), c2),
        ("c3", "Rayleigh quotient monotone on PSD empirical covariances", minutes(2), c3),
        ("c4", "projected noise scaling slope in [0.35, 0.65]", minutes(5), c4),
        ("c5", "theorem constants and their monotonicity", Duration::from_secs(1), c5),
        ("c6", "sample-efficiency ordinal claims", c6_budget(), c6),
        ("c7", "k = p SMART-PM coincides with the power method", minutes(5), c7),
        ("c8", "noiseless runs match the dense top eigenvector", minutes(1), c8),
        ("c9", "inequality suites hold on 200 instances each", minutes(10), c9),
        ("c10", "manifest replay is bit-identical across thread counts", minutes(60), c10),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| x == id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {}: {} [{:.1}s / budget {:.0}s{}] {}",
            if pass { "PASS" } else { "FAIL" },
            id.to_uppercase(),
            name,
            took.as_secs_f64(),
            budget.as_secs_f64(),
            if in_time { "" } else { ", over budget" },
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn c1() -> Outcome {
    let mut worst = 0.0f64;
    for p in [4, 8, 16] {
        let shape = Shape::square(p).unwrap();
        let a = make_circulant(p * p, 0.5).unwrap();
        let x = init_top_eigenmatrix(&a, shape).unwrap();
        let s = x.singular_values().unwrap();
        worst = worst.max(s[1] / s[0]);
    }
    outcome(worst < 1e-8, format!("max sigma_2/sigma_1 = {worst:.3e} (< 1e-8)"))
}

fn c2() -> Outcome {
    let budget = Duration::from_secs(600);
    let shape = Shape::square(100).unwrap();
    let start = Instant::now();
    let mut vals = Vec::new();
    let mut errors = 0;
    for r in 0..100 {
        if start.elapsed() > budget {
            break;
        }
        let seed = replication_seed(0, Study::Spectrum, 0, r);
        match spectrum_instance(Family::Toeplitz, shape, SpectrumMode::Sampled, 2, seed) {
            Ok(s) => vals.push(s[1]),
            Err(_) => errors += 1,
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
    let complete = vals.len() == 100;
    outcome(
        complete && mean <= 0.10,
        format!(
            "mean sigma_2/sigma_1 = {mean:.4} over {} of 100 instances ({errors} errors){}",
            vals.len(),
            if complete { "" } else { ", budget exhausted" }
        ),
    )
}

fn c3() -> Outcome {
    let shape = Shape::square(32).unwrap();
    let mut violations = 0;
    let mut not_psd = 0;
    for r in 0..100u64 {
        let m = spiked_model(shape, 10.0, 1.0, 1, r).unwrap();
        let s = m.sample(800, r ^ 0xA5A5).unwrap();
        let a = empirical_cov(&s).unwrap();
        let x0 = init_random(shape, r).unwrap();
        let rep = smartpm(&a, &x0, &SolverOptions::new(2).recording(), None).unwrap();
        let mono = check_monotonicity(&rep.trajectory, Some(&a), 0).unwrap();
        if !mono.monotone {
            violations += 1;
        }
        if mono.psd_hypothesis != Some(true) {
            not_psd += 1;
        }
    }
    outcome(
        violations == 0 && not_psd == 0,
        format!("{violations} non-monotone runs of 100, {not_psd} non-PSD matrices"),
    )
}

fn c4() -> Outcome {
    let r = lemma1_scaling_probe(64, &[1, 2, 4, 8, 16, 32], 50, 0).unwrap();
    let ratios: Vec<String> = r.rows.iter().map(|x| format!("{}:{:.4}", x.k, x.mean_ratio)).collect();
    outcome(
        (0.35..=0.65).contains(&r.slope),
        format!("slope = {:.4}; mean rho(E_UV)/rho(E) by k = [{}]", r.slope, ratios.join(", ")),
    )
}

fn c5() -> Outcome {
    let c = theorem_constants(10.0, 9.0, 1.0, 2, 1, 0.5).unwrap();
    let exact = (c.gamma - 2.0 / 9.0).abs() <= 1e-12
        && (c.kappa - 9.0).abs() <= 1e-12
        && (c.delta - 0.2).abs() <= 1e-12;
    let mut mono = true;
    let mut prev = f64::INFINITY;
    for i in 1..=1000 {
        let d = theorem_constants(10.0, 2.0 + i as f64 * 0.007, 1.0, 2, 1, 0.5).unwrap().delta;
        mono &= d < prev;
        prev = d;
    }
    let mut prev = f64::INFINITY;
    for i in 0..=1000 {
        let g = theorem_constants(10.0, i as f64 * 0.0089, 1.0, 2, 1, 0.5).unwrap().gamma;
        mono &= g < prev;
        prev = g;
    }
    // mu as a function of gamma, through the gap
    let mut pts: Vec<(f64, f64)> = (0..=1000)
        .map(|i| {
            let c = theorem_constants(10.0, 1.0 + i as f64 * 0.0079, 1.0, 3, 2, 0.7).unwrap();
            (c.gamma, c.mu)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    mono &= pts.windows(2).all(|w| w[1].1 > w[0].1);
    outcome(
        exact && mono,
        format!(
            "gamma = {:.15}, kappa = {}, delta = {:.15}; grids monotone: {mono}",
            c.gamma, c.kappa, c.delta
        ),
    )
}

fn c6_budget() -> Duration {
    // the budget is stated for 8 cores
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8) as u64;
    Duration::from_secs(30 * 60 * 8 / cores)
}

fn c6() -> Outcome {
    // the default 100 replications; at 20 the random-init
    // means at lambda1 = 5 are noisier than their differences along n
    let cfg = ExperimentConfig::defaults(Study::SampleEfficiency);
    assert_eq!(cfg.replications, 100);
    let out = run_study(&cfg).unwrap();
    let ids = [
        "efficiency.smartpm_random_le_power",
        "efficiency.decreasing_in_n",
        "efficiency.decreasing_in_gap",
    ];
    let mut pass = out.failures.is_empty();
    let mut detail = vec![format!("{} failed replications", out.failures.len())];
    for id in ids {
        let a = out.assertion(id).expect("assertion emitted");
        pass &= a.holds;
        detail.push(format!("{id}: {}{}", a.holds, if a.holds { String::new() } else { format!(" ({})", a.detail) }));
    }
    outcome(pass, detail.join("; "))
}

fn c7() -> Outcome {
    let cfg = ExperimentConfig {
        k: vec![32],
        ..ExperimentConfig::defaults(Study::RankSweep)
    };
    let shape = cfg.shape;
    let mut worst = 0.0f64;
    let mut mismatched_lengths = 0;
    let (mut sum_s, mut sum_p) = (0.0, 0.0);
    for r in 0..100 {
        let seeds = ReplicationSeeds::new(&cfg, 0, r);
        let m = spiked_model(shape, 100.0, 1.0, 1, seeds.xbar).unwrap();
        let op = empirical_operator(m.sample(100, seeds.samples).unwrap()).unwrap();
        let s = run_method(&op, shape, Method::SmartPm(Init::Random), 32, seeds.init, &cfg.solver, &m.xbar, true)
            .unwrap();
        let p = run_method(&op, shape, Method::Power, 32, seeds.init, &cfg.solver, &m.xbar, true).unwrap();
        if s.trajectory.len() != p.trajectory.len() {
            mismatched_lengths += 1;
        }
        let es: Vec<f64> = s.trajectory.iter().map(|x| x.error.unwrap()).collect();
        let ep: Vec<f64> = p.trajectory.iter().map(|x| x.error.unwrap()).collect();
        let len = es.len().max(ep.len());
        for t in 0..len {
            let a = es.get(t).or(es.last()).unwrap();
            let b = ep.get(t).or(ep.last()).unwrap();
            worst = worst.max((a - b).abs());
        }
        sum_s += es.last().unwrap();
        sum_p += ep.last().unwrap();
    }
    outcome(
        worst <= 1e-9,
        format!(
            "max per-iteration error difference {worst:.3e}; mean final error smartpm {:.6} vs power {:.6}; \
             {mismatched_lengths} runs with different iteration counts",
            sum_s / 100.0,
            sum_p / 100.0
        ),
    )
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let p = [6usize, 8, 12, 16][i as usize % 4];
        let k = 1 + (i as usize % 3);
        let shape = Shape::square(p).unwrap();
        let lambda1 = rng.random_range(2.0..20.0);
        let m = spiked_model(shape, lambda1, 1.0, k, 100 + i).unwrap();
        let (_, v) = m.covariance.top_eigenpair().unwrap();
        let oracle = matricize(&v, shape).unwrap();
        let x0 = init_random(shape, 200 + i).unwrap();
        let rep = smartpm(&m.covariance, &x0, &SolverOptions::new(k), None).unwrap();
        worst = worst.max(estimation_error(&rep.final_iterate, &oracle).unwrap());
    }
    outcome(worst < 1e-7, format!("max sign-aligned error {worst:.3e} over 50 instances"))
}

fn unit_gaussian(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

struct Suite {
    instances: usize,
    violations: usize,
    note: String,
}

impl Suite {
    fn line(&self, name: &str) -> String {
        format!("{name}: {} violations / {} instances{}", self.violations, self.instances, self.note)
    }
}

const SUITE_SIZE: usize = 200;

fn lemma4_suite() -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut instances, mut violations, mut attempts) = (0, 0, 0);
    while instances < SUITE_SIZE && attempts < 10 * SUITE_SIZE {
        attempts += 1;
        let p = rng.random_range(3..=8usize);
        let shape = Shape::square(p).unwrap();
        let k = rng.random_range(1..p);
        let kbar = rng.random_range(1..=k);
        let xbar = random_rank_k_eigenmatrix(shape, kbar, rng.random()).unwrap();
        let lambda1 = rng.random_range(1.0..50.0);
        let lambda2 = rng.random_range(0.1..2.0);
        let abar = SymmetricMatrix::identity(shape.dim())
            .scaled(lambda2)
            .rank_one_update(lambda1, &vectorize(&xbar))
            .unwrap();
        let pair = pair_containing(&xbar, k, rng.random()).unwrap();
        let e0 = gaussian_symmetric(shape.dim(), rng.random());
        let rho0 = projected_noise_norm(&e0, &pair).unwrap();
        let kappa = rng.random_range(2.05..40.0);
        let e = e0.scaled(lambda1 / (kappa * rho0));
        let r = check_perturbation(&abar, &e, &pair).unwrap();
        if !r.hypotheses_met {
            continue;
        }
        instances += 1;
        if !(r.gamma_holds && r.delta_holds) {
            violations += 1;
        }
    }
    Suite {
        instances,
        violations,
        note: String::new(),
    }
}

fn lemma5_suite() -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut instances, mut violations) = (0, 0);
    while instances < SUITE_SIZE {
        let d = rng.random_range(2..=30usize);
        let cols = rng.random_range(1..=d + 3);
        let g: Vec<Vec<f64>> = (0..cols).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let spike = rng.random_range(0.0..5.0 * d as f64);
        let u = unit_gaussian(d, &mut rng);
        let a = SymmetricMatrix::from_lower_fn(d, |i, j| {
            g.iter().map(|c| c[i] * c[j]).sum::<f64>() + spike * u[i] * u[j]
        });
        let Ok(setup) = PowerStepSetup::new(&a) else {
            continue;
        };
        let mut y = unit_gaussian(d, &mut rng);
        let c: f64 = y.iter().zip(&setup.xbar).map(|(a, b)| a * b).sum();
        if c < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        let r = setup.check(&y).unwrap();
        instances += 1;
        if !r.holds {
            violations += 1;
        }
    }
    Suite {
        instances,
        violations,
        note: String::new(),
    }
}

fn lemma6_suite() -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut instances, mut violations, mut main_text) = (0, 0, 0);
    while instances < SUITE_SIZE {
        let p = rng.random_range(3..=10usize);
        let shape = Shape::square(p).unwrap();
        let k = rng.random_range(1..p);
        let kbar = rng.random_range(1..=k);
        let xbar = random_rank_k_eigenmatrix(shape, kbar, rng.random()).unwrap();
        // mix the truth with noise so that |y^T xbar| covers (0, 1)
        let noise = unit_gaussian(shape.dim(), &mut rng);
        let w = rng.random_range(0.0..3.0);
        let x = vectorize(&xbar);
        let mut y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + w * b).collect();
        let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= n);
        let r = check_rank_trunc_error(&y, &xbar, k).unwrap();
        instances += 1;
        if !r.holds_appendix {
            violations += 1;
        }
        if !r.holds_main_text {
            main_text += 1;
        }
    }
    Suite {
        instances,
        violations,
        note: format!(" (reading with (kbar/k)^(-1/2): {main_text} violations)"),
    }
}

fn contraction_suite() -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut instances, mut violations, mut attempts, mut steps) = (0, 0, 0, 0);
    while instances < SUITE_SIZE && attempts < 20 * SUITE_SIZE {
        attempts += 1;
        let p = rng.random_range(4..=9usize);
        let shape = Shape::square(p).unwrap();
        let k = rng.random_range(2..p);
        let kbar = 1;
        let theta = rng.random_range(0.8..0.97);
        let xbar = random_rank_k_eigenmatrix(shape, kbar, rng.random()).unwrap();
        let lambda1 = rng.random_range(5.0..100.0);
        let abar = SymmetricMatrix::identity(shape.dim()).rank_one_update(lambda1, &vectorize(&xbar)).unwrap();
        let e0 = gaussian_symmetric(shape.dim(), rng.random());
        let probe = ProjectionPair::random(shape, k, &mut ChaCha8Rng::seed_from_u64(rng.random())).unwrap();
        let rho0 = projected_noise_norm(&e0, &probe).unwrap();
        let kappa = rng.random_range(20.0..400.0);
        let e = e0.scaled(lambda1 / (kappa * rho0));
        let a = abar.add(&e).unwrap();
        // start near the truth on the rank-k set
        let z = init_random(shape, rng.random()).unwrap();
        let eps = rng.random_range(0.0..0.3);
        let x0 = EigenMatrix::from_fn(shape, |i, j| xbar.get(i, j) + eps * z.get(i, j));
        let x0 = rank_truncate(&x0.normalized().unwrap(), k).unwrap().normalized().unwrap();
        let opts = SolverOptions {
            record_iterates: true,
            max_iterations: 60,
            ..SolverOptions::new(k).recording()
        };
        let rep = smartpm(&a, &x0, &opts, Some(&xbar)).unwrap();
        let mut pairs = iterate_pairs(&rep.iterates, k).unwrap();
        pairs.push(pair_containing(&xbar, k, rng.random()).unwrap());
        let rho = sampled_rho_euv(&e, shape, k, &pairs, RHO_RANDOM_PAIRS, rng.random()).unwrap();
        let g = eigen_gap(&abar).unwrap();
        let Ok(c) = theorem_constants(g.lambda, g.gap, rho, k, kbar, theta) else {
            continue;
        };
        let ov = overlaps(&rep, &xbar).unwrap();
        let report = check_contraction(&ov, &c).unwrap();
        if !report.hypotheses_met {
            continue;
        }
        instances += 1;
        steps += report.steps_checked;
        if report.cumulative_holds != Some(true) || report.per_step_holds != Some(true) {
            violations += 1;
        }
    }
    Suite {
        instances,
        violations,
        note: format!(" ({steps} per-step checks, {attempts} draws)"),
    }
}

fn c9() -> Outcome {
    let suites = [
        ("perturbation", lemma4_suite()),
        ("power step", lemma5_suite()),
        ("rank truncation", lemma6_suite()),
        ("contraction", contraction_suite()),
    ];
    let pass = suites.iter().all(|(_, s)| s.instances >= SUITE_SIZE && s.violations == 0);
    let lines: Vec<String> = suites.iter().map(|(n, s)| s.line(n)).collect();
    outcome(pass, lines.join("; "))
}

fn replay(dir: &Path, threads: usize) -> ExperimentConfig {
    let mut cfg = Manifest::load(&dir.join(MANIFEST_FILE)).unwrap().config;
    cfg.threads = threads;
    cfg
}

fn same_csvs(a: &Path, b: &Path) -> Result<(), String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    for n in names {
        if std::fs::read(a.join(&n)).unwrap() != std::fs::read(b.join(&n)).unwrap() {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(())
}

fn c10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        ExperimentConfig {
            replications: 100,
            ..ExperimentConfig::defaults(Study::RankSweep)
        },
        ExperimentConfig {
            replications: 10,
            ..ExperimentConfig::defaults(Study::Trajectory)
        },
        ExperimentConfig {
            replications: 5,
            ..ExperimentConfig::defaults(Study::SampleEfficiency)
        },
        ExperimentConfig {
            replications: 4,
            shape: Shape::square(24).unwrap(),
            ..ExperimentConfig::defaults(Study::Spectrum)
        },
    ];
    let mut problems = Vec::new();
    for cfg in configs {
        let name = cfg.study.name();
        let serial_dir = tmp.path().join(format!("{name}_serial"));
        let parallel_dir = tmp.path().join(format!("{name}_parallel"));
        let cfg = ExperimentConfig { threads: 1, ..cfg };
        write_outputs(&run_study(&cfg).unwrap(), &cfg, &serial_dir).unwrap();
        let again = replay(&serial_dir, 8);
        write_outputs(&run_study(&again).unwrap(), &again, &parallel_dir).unwrap();
        if let Err(e) = same_csvs(&serial_dir, &parallel_dir) {
            problems.push(format!("{name}: {e}"));
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "rank_sweep, trajectory, sample_efficiency and spectrum replayed at 8 threads".to_string()
        } else {
            problems.join("; ")
        },
    )
}
