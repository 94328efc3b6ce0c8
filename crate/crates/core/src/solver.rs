//! SMART-PM, the vector power method it reduces to, initializers and the
//! error/objective metrics used throughout the experiments.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DENSE_EIGEN_MAX_DIM};
use crate::rng::{self, keys};
use crate::symmetric::SymmetricMatrix;
use crate::tensorops::{matricize, rank_truncate, vectorize, EigenMatrix, ProjectionPair, Shape};

/// Default cap on iterations.
pub const DEFAULT_MAX_ITERATIONS: usize = 500;
/// Default threshold on the sign-aligned iterate change.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Relative asymmetry tolerated by [`check_symmetry`].
pub const OPERATOR_SYMMETRY_RTOL: f64 = 1e-8;

/// A symmetric linear map on `R^d`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`; both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SymmetricMatrix {
    fn dim(&self) -> usize {
        SymmetricMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        linalg::gemv(self.as_mat(), x, y);
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// Operator given by a closure. Symmetry is not checked on construction;
/// call [`check_symmetry`] when the closure is not symmetric by design.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// `P_{V⊗U} A P_{V⊗U}` applied without forming either factor.
pub struct ProjectedOperator<'a, A: ?Sized> {
    inner: &'a A,
    pair: &'a ProjectionPair,
}

impl<'a, A: LinearOperator + ?Sized> ProjectedOperator<'a, A> {
    pub fn new(inner: &'a A, pair: &'a ProjectionPair) -> Result<Self> {
        if inner.dim() != pair.shape().dim() {
            return Err(Error::shape(format!(
                "operator of dimension {} does not match projection shape {}",
                inner.dim(),
                pair.shape()
            )));
        }
        Ok(Self { inner, pair })
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for ProjectedOperator<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let px = self.pair.project_vec(x).expect("dimension checked on construction");
        let mut apx = vec![0.0; x.len()];
        self.inner.apply(&px, &mut apx);
        let out = self.pair.project_vec(&apx).expect("dimension checked on construction");
        y.copy_from_slice(&out);
    }
}

/// Largest relative asymmetry `|<Au, v> - <u, Av>| / (|A u| |v|)` over
/// `probes` random pairs. Errors when it exceeds [`OPERATOR_SYMMETRY_RTOL`].
pub fn check_symmetry(op: &dyn LinearOperator, probes: usize, seed: u64) -> Result<f64> {
    let d = op.dim();
    let mut rng = rng::stream(seed, &[keys::PROBE]);
    let mut worst = 0.0f64;
    let (mut au, mut av) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..probes {
        let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        op.apply(&u, &mut au);
        op.apply(&v, &mut av);
        let lhs = linalg::dot(&au, &v);
        let rhs = linalg::dot(&u, &av);
        let scale = (linalg::norm2(&au) * linalg::norm2(&v))
            .max(linalg::norm2(&av) * linalg::norm2(&u));
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    if worst > OPERATOR_SYMMETRY_RTOL {
        return Err(Error::param(format!(
            "operator is not symmetric (relative asymmetry {worst:.3e})"
        )));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Rank bound `k`.
    pub rank: usize,
    pub record_trajectory: bool,
    /// Keep every iterate in the report (memory `O(iterations * d)`).
    #[serde(default)]
    pub record_iterates: bool,
    /// When false the loop always runs `max_iterations` steps.
    #[serde(default = "yes")]
    pub stop_on_convergence: bool,
}

fn yes() -> bool {
    true
}

impl SolverOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            rank,
            record_trajectory: false,
            record_iterates: false,
            stop_on_convergence: true,
        }
    }

    pub fn recording(mut self) -> Self {
        self.record_trajectory = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// One recorded iterate. `q` is the Rayleigh quotient `x_t^T A x_t`, `delta`
/// the sign-aligned change from the previous iterate (0 at `t = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    #[serde(rename = "Q")]
    pub q: f64,
    pub delta: f64,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub final_iterate: EigenMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectoryPoint>,
    #[serde(rename = "wall_time_s")]
    pub wall_time: f64,
    /// `X_0, ..., X_T` when requested.
    #[serde(skip)]
    pub iterates: Vec<EigenMatrix>,
}

/// The serialized part of a [`SolveReport`], as read back from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedReport {
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectoryPoint>,
    pub wall_time_s: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Estimation error of the final iterate (last recorded error if any).
    pub fn final_error(&self) -> Option<f64> {
        self.trajectory.last().and_then(|p| p.error)
    }
}

fn check_operator(a: &dyn LinearOperator, shape: Shape) -> Result<()> {
    if a.dim() != shape.dim() {
        return Err(Error::shape(format!(
            "operator of dimension {} does not match shape {shape} (d = {})",
            a.dim(),
            shape.dim()
        )));
    }
    Ok(())
}

fn check_unit(norm: f64, what: &str) -> Result<()> {
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!(
            "{what} must have unit norm, got {norm:.12}"
        )));
    }
    Ok(())
}

/// `y <- A x / |A x|`, returning `x^T A x`.
fn power_step(a: &dyn LinearOperator, x: &[f64], y: &mut [f64]) -> Result<f64> {
    a.apply(x, y);
    let q = linalg::dot(x, y);
    let n = linalg::norm2(y);
    if !n.is_finite() {
        return Err(Error::numerical("operator produced non-finite values"));
    }
    if n == 0.0 {
        return Err(Error::Degenerate(
            "A x is zero: the iterate is orthogonal to the range of A".into(),
        ));
    }
    linalg::scale(y, 1.0 / n);
    Ok(q)
}

fn sign_aligned_change(a: &[f64], b: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    minus.min(plus).sqrt()
}

struct Recorder<'a> {
    on: bool,
    keep_iterates: bool,
    shape: Shape,
    reference: Option<&'a EigenMatrix>,
    points: Vec<TrajectoryPoint>,
    iterates: Vec<EigenMatrix>,
}

impl Recorder<'_> {
    fn push(&mut self, t: usize, x: &[f64], delta: f64) -> Result<()> {
        if self.keep_iterates {
            self.iterates.push(matricize(x, self.shape)?);
        }
        if !self.on {
            return Ok(());
        }
        let error = match self.reference {
            Some(r) => Some(estimation_error(&matricize(x, self.shape)?, r)?),
            None => None,
        };
        // Q is filled in by the next matvec
        self.points.push(TrajectoryPoint {
            t,
            q: f64::NAN,
            delta,
            error,
        });
        Ok(())
    }

    fn set_q(&mut self, q: f64) {
        if let Some(p) = self.points.last_mut() {
            p.q = q;
        }
    }
}

fn run<'a>(
    a: &dyn LinearOperator,
    x0: Vec<f64>,
    shape: Shape,
    opts: &SolverOptions,
    reference: Option<&'a EigenMatrix>,
    truncate: Option<usize>,
) -> Result<SolveReport> {
    opts.validate()?;
    check_operator(a, shape)?;
    if let Some(r) = reference {
        if r.shape() != shape {
            return Err(Error::shape(format!(
                "reference shape {} differs from iterate shape {shape}",
                r.shape()
            )));
        }
    }
    let start = Instant::now();
    let mut rec = Recorder {
        on: opts.record_trajectory,
        keep_iterates: opts.record_iterates,
        shape,
        reference,
        points: Vec::new(),
        iterates: Vec::new(),
    };
    let mut x = x0;
    let mut y = vec![0.0; x.len()];
    rec.push(0, &x, 0.0)?;
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=opts.max_iterations {
        let q = power_step(a, &x, &mut y)?;
        rec.set_q(q);
        let next = match truncate {
            Some(k) => {
                let xt = rank_truncate(&matricize(&y, shape)?, k)?;
                vectorize(&xt.normalized()?)
            }
            None => y.clone(),
        };
        let delta = sign_aligned_change(&next, &x);
        if !delta.is_finite() {
            return Err(Error::numerical(format!("non-finite iterate at t = {t}")));
        }
        x = next;
        iterations = t;
        rec.push(t, &x, delta)?;
        if delta < opts.tolerance {
            converged = true;
            if opts.stop_on_convergence {
                break;
            }
        }
    }
    if rec.on {
        a.apply(&x, &mut y);
        rec.set_q(linalg::dot(&x, &y));
    }
    Ok(SolveReport {
        final_iterate: matricize(&x, shape)?,
        iterations,
        converged,
        trajectory: rec.points,
        wall_time: start.elapsed().as_secs_f64(),
        iterates: rec.iterates,
    })
}

/// SMART-PM: `X_t = RankTrunc(mat(A vec(X_{t-1}) / |A vec(X_{t-1})|), k)`,
/// renormalized, until the sign-aligned change drops below the tolerance.
pub fn smartpm(
    a: &dyn LinearOperator,
    x0: &EigenMatrix,
    opts: &SolverOptions,
    reference: Option<&EigenMatrix>,
) -> Result<SolveReport> {
    let shape = x0.shape();
    shape.check_rank(opts.rank)?;
    check_unit(x0.frobenius_norm(), "initial matrix")?;
    run(a, vectorize(x0), shape, opts, reference, Some(opts.rank))
}

/// Vector power method. `shape` only affects how iterates are matricized
/// for reporting; `opts.rank` is ignored.
pub fn power_method(
    a: &dyn LinearOperator,
    x0: &[f64],
    shape: Shape,
    opts: &SolverOptions,
    reference: Option<&EigenMatrix>,
) -> Result<SolveReport> {
    if x0.len() != shape.dim() {
        return Err(Error::shape(format!(
            "start vector of length {} does not match shape {shape}",
            x0.len()
        )));
    }
    check_unit(linalg::norm2(x0), "start vector")?;
    run(a, x0.to_vec(), shape, opts, reference, None)
}

/// I.i.d. standard normal entries scaled to unit Frobenius norm.
pub fn init_random(shape: Shape, seed: u64) -> Result<EigenMatrix> {
    let mut rng = rng::stream(seed, &[keys::INIT_RANDOM]);
    EigenMatrix::from_fn(shape, |_, _| rng.sample(StandardNormal)).normalized()
}

/// [`init_random`] truncated to rank `k` and renormalized.
pub fn init_random_rank_k(shape: Shape, k: usize, seed: u64) -> Result<EigenMatrix> {
    rank_truncate(&init_random(shape, seed)?, k)?.normalized()
}

/// Top eigenvector of `a`, sign fixed so its largest-magnitude entry is
/// positive, matricized. Dense up to [`DENSE_EIGEN_MAX_DIM`], Lanczos above.
pub fn init_top_eigenmatrix(a: &SymmetricMatrix, shape: Shape) -> Result<EigenMatrix> {
    check_operator(a, shape)?;
    let v = top_eigenvector(a)?;
    matricize(&v, shape)?.normalized()
}

pub(crate) fn top_eigenvector(a: &SymmetricMatrix) -> Result<Vec<f64>> {
    if a.dim() <= DENSE_EIGEN_MAX_DIM {
        return Ok(a.top_eigenpair()?.1);
    }
    let mut rng = rng::stream(0, &[keys::LANCZOS]);
    let res = linalg::lanczos(
        a.dim(),
        |x, y| linalg::gemv(a.as_mat(), x, y),
        &linalg::LanczosOptions::default(),
        &mut rng,
    )?;
    let mut v = res
        .largest
        .vector
        .ok_or_else(|| Error::numerical("lanczos returned no eigenvector"))?;
    linalg::fix_sign(&mut v);
    Ok(v)
}

/// Top eigenvector of a matrix-free operator by Lanczos, sign fixed as in
/// [`init_top_eigenmatrix`].
pub fn top_eigenvector_op(a: &dyn LinearOperator) -> Result<Vec<f64>> {
    let mut rng = rng::stream(0, &[keys::LANCZOS]);
    let res = linalg::lanczos(
        a.dim(),
        |x, y| a.apply(x, y),
        &linalg::LanczosOptions::default(),
        &mut rng,
    )?;
    let mut v = res
        .largest
        .vector
        .ok_or_else(|| Error::numerical("lanczos returned no eigenvector"))?;
    linalg::fix_sign(&mut v);
    Ok(v)
}

/// The three initializations compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Random,
    RandomRankK,
    TopEigenmatrix,
}

impl Init {
    pub const ALL: [Init; 3] = [Init::Random, Init::RandomRankK, Init::TopEigenmatrix];

    pub fn name(self) -> &'static str {
        match self {
            Init::Random => "random",
            Init::RandomRankK => "random_rank_k",
            Init::TopEigenmatrix => "top_eigenmatrix",
        }
    }

    pub fn build(self, a: &SymmetricMatrix, shape: Shape, k: usize, seed: u64) -> Result<EigenMatrix> {
        match self {
            Init::Random => init_random(shape, seed),
            Init::RandomRankK => init_random_rank_k(shape, k, seed),
            Init::TopEigenmatrix => init_top_eigenmatrix(a, shape),
        }
    }
}

impl Init {
    /// As [`Init::build`] for a matrix-free operator; the top eigenmatrix
    /// comes from [`top_eigenvector_op`].
    pub fn build_op(self, a: &dyn LinearOperator, shape: Shape, k: usize, seed: u64) -> Result<EigenMatrix> {
        match self {
            Init::TopEigenmatrix => {
                check_operator(a, shape)?;
                matricize(&top_eigenvector_op(a)?, shape)?.normalized()
            }
            other => other.build_unchecked(shape, k, seed),
        }
    }

    fn build_unchecked(self, shape: Shape, k: usize, seed: u64) -> Result<EigenMatrix> {
        match self {
            Init::Random => init_random(shape, seed),
            Init::RandomRankK => init_random_rank_k(shape, k, seed),
            Init::TopEigenmatrix => Err(Error::param("top_eigenmatrix needs the operator")),
        }
    }
}

impl std::str::FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Init::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| {
                Error::param(format!(
                    "unknown init {s:?}; expected one of random, random_rank_k, top_eigenmatrix"
                ))
            })
    }
}

/// `min_{s = ±1} |s X - Xref|_F`.
pub fn estimation_error(x: &EigenMatrix, xref: &EigenMatrix) -> Result<f64> {
    x.check_same_shape(xref)?;
    Ok(sign_aligned_change(&vectorize(x), &vectorize(xref)))
}

/// `vec(X)^T A vec(X)`.
pub fn rayleigh(a: &dyn LinearOperator, x: &EigenMatrix) -> Result<f64> {
    check_operator(a, x.shape())?;
    let v = vectorize(x);
    let mut av = vec![0.0; v.len()];
    a.apply(&v, &mut av);
    Ok(linalg::dot(&v, &av))
}
