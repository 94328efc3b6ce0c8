//! Theoretical constants of the convergence theorem and numerical probes of
//! its assumptions and supporting inequalities.
//!
//! Notation: `lambda` and `gap` are the top eigenvalue and eigen-gap of the
//! signal matrix, `rho` is `rho(E_UV)`, the spectral norm of the noise after
//! the two-sided Kronecker projection.

use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, keys};
use crate::solver::{SolveReport, TrajectoryPoint};
use crate::symmetric::SymmetricMatrix;
use crate::tensorops::{
    matricize, rank_truncate_full, rank_truncate_vec, spectral_norm, vectorize, EigenMatrix,
    ProjectionPair, Shape,
};

/// Absolute slack allowed on every checked inequality.
pub const INEQUALITY_SLACK: f64 = 1e-9;
/// Random pairs added to the iterate pairs when estimating `rho(E_UV)`.
pub const RHO_RANDOM_PAIRS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub lambda: f64,
    pub gap: f64,
    pub rho_euv: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    pub theta: f64,
    pub mu: f64,
    pub kbar: usize,
    pub k: usize,
    /// `kappa > 2`.
    pub kappa_gt_2: bool,
    /// `mu < 1`.
    pub mu_lt_1: bool,
}

impl TheoremConstants {
    pub fn hypotheses_hold(&self) -> bool {
        self.kappa_gt_2 && self.mu_lt_1
    }

    /// Asymptotic error floor `sqrt(10) delta / (1 - mu)`.
    pub fn floor(&self) -> f64 {
        10f64.sqrt() * self.delta / (1.0 - self.mu)
    }
}

/// `kappa = gap / rho`, `gamma = (lambda - gap + rho) / (lambda - rho)`,
/// `delta = sqrt(2) / sqrt(1 + (kappa - 2)^2)` and
/// `mu = sqrt(1 + 2 (sqrt(kbar/k) + kbar/k)) sqrt(1 - theta (1 + theta) (1 - gamma^2) / 2)`.
///
/// `rho = 0` gives `kappa = inf` and `delta = 0`.
pub fn theorem_constants(
    lambda: f64,
    gap: f64,
    rho_euv: f64,
    k: usize,
    kbar: usize,
    theta: f64,
) -> Result<TheoremConstants> {
    for (name, v) in [("lambda", lambda), ("gap", gap), ("rho", rho_euv), ("theta", theta)] {
        if !v.is_finite() {
            return Err(Error::param(format!("{name} must be finite, got {v}")));
        }
    }
    if rho_euv < 0.0 {
        return Err(Error::param(format!("rho(E_UV) must be nonnegative, got {rho_euv}")));
    }
    if !(lambda - rho_euv > 0.0) {
        return Err(Error::param(format!(
            "lambda - rho(E_UV) must be positive (lambda = {lambda}, rho = {rho_euv})"
        )));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param(format!("theta must lie in (0, 1), got {theta}")));
    }
    if kbar == 0 || kbar > k {
        return Err(Error::param(format!("need 1 <= kbar <= k, got kbar = {kbar}, k = {k}")));
    }
    let kappa = gap / rho_euv;
    let gamma = (lambda - gap + rho_euv) / (lambda - rho_euv);
    let delta = 2f64.sqrt() / (1.0 + (kappa - 2.0).powi(2)).sqrt();
    let ratio = kbar as f64 / k as f64;
    let mu = (1.0 + 2.0 * (ratio.sqrt() + ratio)).sqrt()
        * (1.0 - 0.5 * theta * (1.0 + theta) * (1.0 - gamma * gamma)).sqrt();
    Ok(TheoremConstants {
        lambda,
        gap,
        rho_euv,
        kappa,
        gamma,
        delta,
        theta,
        mu,
        kbar,
        k,
        kappa_gt_2: kappa > 2.0,
        mu_lt_1: mu < 1.0,
    })
}

/// How the eigen-gap of a spiked model `lambda1 xbar xbar^T + lambda2 I` is
/// read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapConvention {
    /// Gap of the spectrum of the model covariance: top `lambda1 + lambda2`,
    /// gap `lambda1`.
    CovarianceSpectrum,
    /// Top `lambda1`, gap `lambda1 - lambda2`.
    LambdaDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledConstants {
    pub convention: GapConvention,
    pub constants: TheoremConstants,
}

/// Constants for a spiked model under both gap conventions.
pub fn spiked_constants(
    lambda1: f64,
    lambda2: f64,
    rho_euv: f64,
    k: usize,
    kbar: usize,
    theta: f64,
) -> Result<Vec<LabeledConstants>> {
    Ok(vec![
        LabeledConstants {
            convention: GapConvention::CovarianceSpectrum,
            constants: theorem_constants(lambda1 + lambda2, lambda1, rho_euv, k, kbar, theta)?,
        },
        LabeledConstants {
            convention: GapConvention::LambdaDifference,
            constants: theorem_constants(lambda1, lambda1 - lambda2, rho_euv, k, kbar, theta)?,
        },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenGap {
    pub lambda: f64,
    pub gap: f64,
    /// `gap > 0`.
    pub gap_positive: bool,
}

/// `lambda = lambda_max(A)`, `gap = lambda - max_{j > 1} |lambda_j(A)|`.
pub fn eigen_gap(a: &SymmetricMatrix) -> Result<EigenGap> {
    if a.dim() < 2 {
        return Err(Error::shape("eigen-gap needs dimension at least 2"));
    }
    let ev = a.eigenvalues()?;
    let rest = ev[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = ev[0] - rest;
    Ok(EigenGap {
        lambda: ev[0],
        gap,
        gap_positive: gap > 0.0,
    })
}

/// `rho(P_{V⊗U} E P_{V⊗U})`, from the exact `k² x k²` compression of `E`.
pub fn projected_noise_norm(e: &SymmetricMatrix, pair: &ProjectionPair) -> Result<f64> {
    let c = pair.compress(e)?;
    spectral_norm(&c)
}

/// `max rho(E_UV)` over the given pairs and `n_random` Haar-random rank-`k`
/// pairs. A sampled lower bound on the supremum over all rank-`k` pairs.
pub fn sampled_rho_euv(
    e: &SymmetricMatrix,
    shape: Shape,
    k: usize,
    pairs: &[ProjectionPair],
    n_random: usize,
    seed: u64,
) -> Result<f64> {
    let mut best = 0.0f64;
    for p in pairs {
        best = best.max(projected_noise_norm(e, p)?);
    }
    for i in 0..n_random {
        let mut rng = rng::stream(seed, &[keys::PAIR, i as u64]);
        let p = ProjectionPair::random(shape, k, &mut rng)?;
        best = best.max(projected_noise_norm(e, &p)?);
    }
    Ok(best)
}

/// Projection pairs `(U_t, V_t)` of the rank-`k` truncations of every
/// recorded iterate.
pub fn iterate_pairs(iterates: &[EigenMatrix], k: usize) -> Result<Vec<ProjectionPair>> {
    iterates
        .iter()
        .map(|x| rank_truncate_full(x, k).map(|t| t.pair))
        .collect()
}

/// A rank-`k` pair whose projector fixes `xbar`: the singular subspaces of
/// `xbar` completed with random directions.
pub fn pair_containing(xbar: &EigenMatrix, k: usize, seed: u64) -> Result<ProjectionPair> {
    let shape = xbar.shape();
    shape.check_rank(k)?;
    let kbar = xbar.numerical_rank()?;
    if kbar > k {
        return Err(Error::param(format!("xbar has rank {kbar} > k = {k}")));
    }
    let t = rank_truncate_full(xbar, kbar.max(1))?;
    let mut rng = rng::stream(seed, &[keys::PAIR]);
    let complete = |base: faer::MatRef<'_, f64>, rows: usize, rng: &mut rng::Stream| {
        let m = Mat::from_fn(rows, k, |i, j| {
            if j < base.ncols() {
                base[(i, j)]
            } else {
                rng.sample(StandardNormal)
            }
        });
        m.qr().compute_thin_Q()
    };
    let u = complete(t.pair.u(), shape.rows(), &mut rng);
    let v = complete(t.pair.v(), shape.cols(), &mut rng);
    ProjectionPair::new(u, v)
}

/// Symmetric Gaussian matrix `(G + G^T) / sqrt(2)`.
pub fn gaussian_symmetric(d: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = rng::stream(seed, &[keys::NOISE]);
    let g = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    SymmetricMatrix::from_lower_fn(d, |i, j| s * (g[(i, j)] + g[(j, i)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Row {
    pub k: usize,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub p: usize,
    pub rows: Vec<Lemma1Row>,
    /// Least-squares slope of `ln(mean ratio)` against `ln k`.
    pub slope: f64,
    /// Mean ratios non-decreasing in `k`.
    pub monotone: bool,
}

/// Ratio `rho(E_UV) / rho(E)` for Gaussian symmetric `E` at `d = p²` and
/// random rank-`k` pairs, per `k`, over `trials` draws.
pub fn lemma1_scaling_probe(p: usize, k_values: &[usize], trials: usize, seed: u64) -> Result<Lemma1Report> {
    let shape = Shape::square(p)?;
    if k_values.is_empty() || trials == 0 {
        return Err(Error::param("need at least one k and one trial"));
    }
    for &k in k_values {
        shape.check_rank(k)?;
    }
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>> {
            let e = gaussian_symmetric(shape.dim(), rng::derive_seed(seed, &[trial as u64]));
            let rho = spectral_norm(&e)?;
            k_values
                .iter()
                .map(|&k| {
                    let mut r = rng::stream(seed, &[keys::PAIR, trial as u64, k as u64]);
                    let pair = ProjectionPair::random(shape, k, &mut r)?;
                    Ok(projected_noise_norm(&e, &pair)? / rho)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Lemma1Row> = k_values
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let vals: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
            let (mean, std) = mean_std(&vals);
            Lemma1Row {
                k,
                mean_ratio: mean,
                std_ratio: std,
                trials,
            }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| (r.k as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_ratio.ln()).collect();
    let slope = ls_slope(&xs, &ys);
    let monotone = rows.windows(2).all(|w| w[1].mean_ratio >= w[0].mean_ratio);
    Ok(Lemma1Report {
        p,
        rows,
        slope,
        monotone,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator, 0 for `n = 1`).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    /// First `t` with `Q_t < Q_{t-1} - slack * |Q_{t-1}|`.
    pub first_violation: Option<usize>,
    /// Comparisons start at `Q_{from_t + 1}` vs `Q_{from_t}`.
    pub from_t: usize,
    pub comparisons: usize,
    /// Whether the operator was verified PSD, when it was supplied.
    pub psd_hypothesis: Option<bool>,
}

/// Checks `Q_t >= Q_{t-1} - 1e-9 |Q_{t-1}|` for every recorded `t > from_t`.
///
/// Use `from_t = 1` when the initial matrix may exceed the rank bound: the
/// ascent property only applies once the iterate is feasible.
pub fn check_monotonicity(
    trajectory: &[TrajectoryPoint],
    a: Option<&SymmetricMatrix>,
    from_t: usize,
) -> Result<MonotonicityReport> {
    if trajectory.is_empty() {
        return Err(Error::param("no trajectory recorded"));
    }
    let mut first_violation = None;
    let mut comparisons = 0;
    for w in trajectory.windows(2) {
        if w[0].t < from_t {
            continue;
        }
        comparisons += 1;
        if w[1].q < w[0].q - INEQUALITY_SLACK * w[0].q.abs() {
            first_violation = Some(w[1].t);
            break;
        }
    }
    let psd_hypothesis = a.map(|a| a.is_psd(1e-10)).transpose()?;
    Ok(MonotonicityReport {
        monotone: first_violation.is_none(),
        first_violation,
        from_t,
        comparisons,
        psd_hypothesis,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Row {
    pub index: usize,
    pub eigenvalue: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `p * max(sigma_max, sigma_min)^2`, about 1 for a flat eigenmatrix
    /// and `p` for a rank-one one.
    pub flatness: f64,
    pub numerical_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Report {
    pub p: usize,
    pub rows: Vec<Assumption2Row>,
    pub median_flatness: f64,
    pub min_flatness: f64,
    pub max_flatness: f64,
    /// Eigenmatrices whose numerical rank is below `min(p1, p2)`.
    pub rank_deficient: usize,
}

/// Extreme singular values of every matricized eigenvector of `e`. The
/// result depends on the basis returned for repeated eigenvalues.
pub fn check_assumption2(e: &SymmetricMatrix, shape: Shape) -> Result<Assumption2Report> {
    if e.dim() != shape.dim() {
        return Err(Error::shape(format!(
            "matrix of dimension {} does not match shape {shape}",
            e.dim()
        )));
    }
    let p = shape.max_rank();
    let (vals, vecs) = e.eigen()?;
    let mut rows = Vec::with_capacity(vals.len());
    for (i, &lam) in vals.iter().enumerate() {
        let w = matricize(vecs.col_as_slice(i), shape)?;
        let s = w.singular_values()?;
        let (smax, smin) = (s[0], s[s.len() - 1]);
        let rank = s.iter().filter(|&&x| x > 1e-10 * smax).count();
        rows.push(Assumption2Row {
            index: i,
            eigenvalue: lam,
            sigma_max: smax,
            sigma_min: smin,
            flatness: p as f64 * smax.max(smin).powi(2),
            numerical_rank: rank,
        });
    }
    let mut f: Vec<f64> = rows.iter().map(|r| r.flatness).collect();
    f.sort_by(f64::total_cmp);
    let median = if f.len() % 2 == 1 {
        f[f.len() / 2]
    } else {
        0.5 * (f[f.len() / 2 - 1] + f[f.len() / 2])
    };
    Ok(Assumption2Report {
        p,
        rank_deficient: rows.iter().filter(|r| r.numerical_rank < p).count(),
        median_flatness: median,
        min_flatness: f[0],
        max_flatness: f[f.len() - 1],
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub hypotheses_met: bool,
    pub unmet_reason: Option<String>,
    pub initial_overlap: f64,
    /// `sqrt(1 - |<X_0, Xbar>|) <= sqrt(10) delta / (1 - mu)`.
    pub alternative_clause: bool,
    /// `sqrt(1 - |<X_t, Xbar>|) <= mu^t sqrt(1 - |<X_0, Xbar>|) + sqrt(10) delta / (1 - mu)`
    /// for every `t` (or the alternative clause). `None` when the
    /// hypotheses are unmet.
    pub cumulative_holds: Option<bool>,
    pub first_cumulative_violation: Option<usize>,
    /// Largest `1 - |<X_t, Xbar>| - bound^2`. Squares are compared so that
    /// rounding near overlap 1 is not amplified by the square root.
    pub max_cumulative_excess: f64,
    /// `sqrt(1 - |<X_t, Xbar>|) <= mu sqrt(1 - |<X_{t-1}, Xbar>|) + sqrt(10) delta`
    /// at every step whose previous iterate satisfies
    /// `|<X_{t-1}, Xbar>| > theta + delta`.
    pub per_step_holds: Option<bool>,
    pub first_per_step_violation: Option<usize>,
    pub max_per_step_excess: f64,
    pub steps_checked: usize,
}

/// `|<X_t, Xbar>|` for every recorded iterate, from the iterates when kept
/// and otherwise from the recorded errors (which must be against `xbar`).
pub fn overlaps(report: &SolveReport, xbar: &EigenMatrix) -> Result<Vec<f64>> {
    if !report.iterates.is_empty() {
        return report
            .iterates
            .iter()
            .map(|x| x.inner(xbar).map(f64::abs))
            .collect();
    }
    report
        .trajectory
        .iter()
        .map(|p| {
            p.error
                .map(|e| (1.0 - 0.5 * e * e).abs())
                .ok_or_else(|| Error::param("trajectory has no errors against the reference"))
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::param("no trajectory recorded"))
            } else {
                Ok(v)
            }
        })
}

/// Checks the cumulative and per-step contraction bounds on a run given the
/// overlaps `|<X_t, Xbar>|`, `t = 0..=T`.
pub fn check_contraction(overlaps: &[f64], c: &TheoremConstants) -> Result<ContractionReport> {
    let Some(&c0) = overlaps.first() else {
        return Err(Error::param("no trajectory recorded"));
    };
    let s: Vec<f64> = overlaps.iter().map(|o| (1.0 - o).max(0.0).sqrt()).collect();
    let mut reasons = Vec::new();
    if !c.kappa_gt_2 {
        reasons.push(format!("kappa = {} <= 2", c.kappa));
    }
    if !c.mu_lt_1 {
        reasons.push(format!("mu = {} >= 1", c.mu));
    }
    if c0 < c.theta + c.delta {
        reasons.push(format!(
            "|<X_0, Xbar>| = {c0} < theta + delta = {}",
            c.theta + c.delta
        ));
    }
    let hypotheses_met = reasons.is_empty();
    let floor = if c.mu < 1.0 { c.floor() } else { f64::INFINITY };
    let alternative_clause = s[0] <= floor;
    let mut report = ContractionReport {
        hypotheses_met,
        unmet_reason: (!hypotheses_met).then(|| reasons.join("; ")),
        initial_overlap: c0,
        alternative_clause,
        cumulative_holds: None,
        first_cumulative_violation: None,
        max_cumulative_excess: f64::NEG_INFINITY,
        per_step_holds: None,
        first_per_step_violation: None,
        max_per_step_excess: f64::NEG_INFINITY,
        steps_checked: 0,
    };
    if !hypotheses_met {
        return Ok(report);
    }
    for t in 0..s.len() {
        let excess = (1.0 - overlaps[t]) - (c.mu.powi(t as i32) * s[0] + floor).powi(2);
        report.max_cumulative_excess = report.max_cumulative_excess.max(excess);
        if excess > INEQUALITY_SLACK && report.first_cumulative_violation.is_none() {
            report.first_cumulative_violation = Some(t);
        }
    }
    report.cumulative_holds = Some(alternative_clause || report.first_cumulative_violation.is_none());
    let step_floor = 10f64.sqrt() * c.delta;
    for t in 1..s.len() {
        if overlaps[t - 1] <= c.theta + c.delta {
            continue;
        }
        report.steps_checked += 1;
        let excess = (1.0 - overlaps[t]) - (c.mu * s[t - 1] + step_floor).powi(2);
        report.max_per_step_excess = report.max_per_step_excess.max(excess);
        if excess > INEQUALITY_SLACK && report.first_per_step_violation.is_none() {
            report.first_per_step_violation = Some(t);
        }
    }
    report.per_step_holds = Some(report.first_per_step_violation.is_none());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTruncCheck {
    pub kbar: usize,
    pub k: usize,
    /// `|y^T xbar|`.
    pub overlap_before: f64,
    /// `|RankTrunc(y, k)^T xbar|` (unnormalized truncation).
    pub overlap_after: f64,
    /// Right-hand side with the factor `(kbar/k)^{1/2}`.
    pub bound_appendix: f64,
    /// Right-hand side with the factor `(kbar/k)^{-1/2}`.
    pub bound_main_text: f64,
    pub holds_appendix: bool,
    pub holds_main_text: bool,
}

/// `|RankTrunc(y,k)^T xbar| >= |c| - f min[sqrt(1 - c^2), (1 + sqrt(kbar/k)) (1 - c^2)]`
/// with `c = y^T xbar`, for `f = (kbar/k)^{1/2}` and for `f = (kbar/k)^{-1/2}`.
pub fn check_rank_trunc_error(y: &[f64], xbar: &EigenMatrix, k: usize) -> Result<RankTruncCheck> {
    let shape = xbar.shape();
    if y.len() != shape.dim() {
        return Err(Error::shape(format!(
            "y has length {} but xbar has shape {shape}",
            y.len()
        )));
    }
    let ny = linalg::norm2(y);
    if (ny - 1.0).abs() > 1e-9 || !xbar.is_unit(1e-9) {
        return Err(Error::param("y and xbar must both have unit norm"));
    }
    let kbar = xbar.numerical_rank()?;
    if kbar > k {
        return Err(Error::param(format!("xbar has rank {kbar} > k = {k}")));
    }
    let x = vectorize(xbar);
    let c = linalg::dot(y, &x);
    let after = linalg::dot(&rank_truncate_vec(y, shape, k)?, &x).abs();
    let r = kbar as f64 / k as f64;
    let one_minus = (1.0 - c * c).max(0.0);
    let m = one_minus.sqrt().min((1.0 + r.sqrt()) * one_minus);
    let bound_appendix = c.abs() - r.sqrt() * m;
    let bound_main_text = c.abs() - m / r.sqrt();
    Ok(RankTruncCheck {
        kbar,
        k,
        overlap_before: c.abs(),
        overlap_after: after,
        bound_appendix,
        bound_main_text,
        holds_appendix: after >= bound_appendix - INEQUALITY_SLACK,
        holds_main_text: after >= bound_main_text - INEQUALITY_SLACK,
    })
}

/// Spectral data for checking single power-method steps on a fixed matrix.
#[derive(Debug, Clone)]
pub struct PowerStepSetup {
    a: SymmetricMatrix,
    /// Eigenvector of the largest-magnitude eigenvalue.
    pub xbar: Vec<f64>,
    /// Second largest over largest eigenvalue magnitude.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStepCheck {
    pub gamma: f64,
    pub overlap_before: f64,
    pub overlap_after: f64,
    pub bound: f64,
    pub holds: bool,
}

impl PowerStepSetup {
    pub fn new(a: &SymmetricMatrix) -> Result<Self> {
        if a.dim() < 2 {
            return Err(Error::shape("need dimension at least 2"));
        }
        let (vals, vecs) = a.eigen()?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&i, &j| vals[j].abs().total_cmp(&vals[i].abs()));
        let top = order[0];
        let gamma = vals[order[1]].abs() / vals[top].abs();
        if !(gamma < 1.0) {
            return Err(Error::param(format!(
                "largest-magnitude eigenvalue is not isolated (gamma = {gamma})"
            )));
        }
        Ok(Self {
            a: a.clone(),
            xbar: vecs.col_as_slice(top).to_vec(),
            gamma,
        })
    }

    /// `|xbar^T y'| >= |xbar^T y| [1 + (1 - gamma^2)(1 - (xbar^T y)^2) / 2]`
    /// with `y' = A y / |A y|`.
    pub fn check(&self, y: &[f64]) -> Result<PowerStepCheck> {
        let ny = linalg::norm2(y);
        if (ny - 1.0).abs() > 1e-9 {
            return Err(Error::param("y must have unit norm"));
        }
        let mut ay = self.a.matvec(y);
        let n = linalg::norm2(&ay);
        if n == 0.0 {
            return Err(Error::Degenerate("A y is zero".into()));
        }
        linalg::scale(&mut ay, 1.0 / n);
        let c = linalg::dot(&self.xbar, y).abs();
        let after = linalg::dot(&self.xbar, &ay).abs();
        let bound = c * (1.0 + (1.0 - self.gamma.powi(2)) * (1.0 - c * c) / 2.0);
        Ok(PowerStepCheck {
            gamma: self.gamma,
            overlap_before: c,
            overlap_after: after,
            bound,
            holds: after >= bound - INEQUALITY_SLACK,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub lambda: f64,
    pub gap: f64,
    pub rho_euv: f64,
    pub kappa: f64,
    pub hypotheses_met: bool,
    pub unmet_reason: Option<String>,
    pub gamma_bound: f64,
    /// Second largest over largest eigenvalue magnitude of `A_UV`.
    pub measured_ratio: f64,
    pub gamma_holds: bool,
    pub delta_bound: f64,
    /// Sign-aligned `|x_1(A_UV) - xbar|`.
    pub eigvec_distance: f64,
    pub delta_holds: bool,
}

/// Checks both conclusions of the rank-truncated perturbation bound on
/// `A = Abar + E` projected by `pair`. Hypothesis failures are reported,
/// not raised.
pub fn check_perturbation(
    abar: &SymmetricMatrix,
    e: &SymmetricMatrix,
    pair: &ProjectionPair,
) -> Result<PerturbationReport> {
    if abar.dim() != e.dim() {
        return Err(Error::shape("Abar and E differ in dimension"));
    }
    let eg = eigen_gap(abar)?;
    let (_, xbar) = abar.top_eigenpair()?;
    let rho = projected_noise_norm(e, pair)?;
    let kappa = eg.gap / rho;
    let mut reasons = Vec::new();
    let px = pair.project_vec(&xbar)?;
    let leak = px.iter().zip(&xbar).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if leak > 1e-9 {
        reasons.push(format!("projection moves xbar by {leak:.3e}"));
    }
    if !(kappa > 2.0) {
        reasons.push(format!("kappa = {kappa} <= 2"));
    }
    let gamma_bound = (eg.lambda - eg.gap + rho) / (eg.lambda - rho);
    let delta_bound = 2f64.sqrt() / (1.0 + (kappa - 2.0).powi(2)).sqrt();

    let a = abar.add(e)?;
    let core = pair.compress(&a)?;
    let (vals, vecs) = core.eigen()?;
    let mut mags: Vec<(f64, usize)> = vals.iter().enumerate().map(|(i, v)| (v.abs(), i)).collect();
    if core.dim() < a.dim() {
        // the projected matrix also has d - k² zero eigenvalues
        mags.push((0.0, usize::MAX));
    }
    mags.sort_by(|x, y| y.0.total_cmp(&x.0));
    let measured_ratio = if mags.len() > 1 { mags[1].0 / mags[0].0 } else { 0.0 };
    let x1 = pair.expand_vec(vecs.col_as_slice(mags[0].1))?;
    let minus: f64 = x1.iter().zip(&xbar).map(|(a, b)| (a - b).powi(2)).sum();
    let plus: f64 = x1.iter().zip(&xbar).map(|(a, b)| (a + b).powi(2)).sum();
    let dist = minus.min(plus).sqrt();
    Ok(PerturbationReport {
        lambda: eg.lambda,
        gap: eg.gap,
        rho_euv: rho,
        kappa,
        hypotheses_met: reasons.is_empty(),
        unmet_reason: (!reasons.is_empty()).then(|| reasons.join("; ")),
        gamma_bound,
        measured_ratio,
        gamma_holds: measured_ratio <= gamma_bound + INEQUALITY_SLACK,
        delta_bound,
        eigvec_distance: dist,
        delta_holds: dist <= delta_bound + INEQUALITY_SLACK,
    })
}
