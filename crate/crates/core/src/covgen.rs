//! Covariance families, the spiked model, Gaussian sampling and the
//! empirical second-moment matrix.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, keys, Stream};
use crate::solver::LinearOperator;
use crate::symmetric::SymmetricMatrix;
use crate::tensorops::{vectorize, EigenMatrix, Shape};

/// Relative diagonal jitter tried once when a Cholesky factorization fails.
pub const CHOLESKY_JITTER: f64 = 1e-12;
/// Eigenvalues above `-PSD_RTOL * rho` count as nonnegative.
pub const PSD_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Circulant,
    Toeplitz,
    DiagDominant,
    Kronecker,
    GeneralPsd,
    Spiked,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Circulant,
        Family::Toeplitz,
        Family::DiagDominant,
        Family::Kronecker,
        Family::GeneralPsd,
        Family::Spiked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Circulant => "circulant",
            Family::Toeplitz => "toeplitz",
            Family::DiagDominant => "diag_dominant",
            Family::Kronecker => "kronecker",
            Family::GeneralPsd => "general_psd",
            Family::Spiked => "spiked",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = Family::ALL.iter().map(|f| f.name()).collect();
                Error::param(format!("unknown family {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Default decay for the Toeplitz family.
pub const DEFAULT_TOEPLITZ_R: f64 = 0.9;
/// Default decay for the circulant family.
pub const DEFAULT_CIRCULANT_R: f64 = 0.5;

/// Family parameters. Which keys apply depends on the family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kbar: Option<usize>,
}

/// `{"family": ..., "d": ..., "params": {...}, "seed": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default)]
    pub params: FamilyParams,
    #[serde(default)]
    pub seed: u64,
}

impl CovarianceSpec {
    pub fn new(family: Family, d: usize, seed: u64) -> Self {
        Self {
            family,
            d: Some(d),
            params: FamilyParams::default(),
            seed,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Rejects parameters that do not belong to the family and checks the
    /// dimension is determined.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let allowed: &[&str] = match self.family {
            Family::Circulant | Family::Toeplitz => &["r"],
            Family::DiagDominant | Family::GeneralPsd => &[],
            Family::Kronecker => &["p1", "p2"],
            Family::Spiked => &["p1", "p2", "lambda1", "kbar"],
        };
        let present = [
            ("r", p.r.is_some()),
            ("p1", p.p1.is_some()),
            ("p2", p.p2.is_some()),
            ("lambda1", p.lambda1.is_some()),
            ("kbar", p.kbar.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(Error::Config(format!(
                    "parameter {name:?} does not apply to family {}",
                    self.family
                )));
            }
        }
        if p.p1.is_some() != p.p2.is_some() {
            return Err(Error::Config("p1 and p2 must be given together".into()));
        }
        let d = self.dim()?;
        if d == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> Result<usize> {
        match (self.params.p1, self.params.p2, self.d) {
            (Some(a), Some(b), Some(d)) if a * b != d => Err(Error::Config(format!(
                "d = {d} disagrees with p1 * p2 = {}",
                a * b
            ))),
            (Some(a), Some(b), _) => Ok(a * b),
            (_, _, Some(d)) => Ok(d),
            _ => Err(Error::Config("the dimension d (or p1 and p2) is required".into())),
        }
    }

    /// The matricization under which the family's top eigenvector is
    /// naturally a matrix. For Kronecker products this is `p2 x p1`.
    pub fn shape(&self) -> Result<Shape> {
        match (self.family, self.params.p1, self.params.p2) {
            (Family::Kronecker, Some(a), Some(b)) => Shape::new(b, a),
            (_, Some(a), Some(b)) => Shape::new(a, b),
            _ => Shape::from_dim(self.dim()?),
        }
    }

    pub fn build(&self) -> Result<SymmetricMatrix> {
        self.validate()?;
        let d = self.dim()?;
        let p = &self.params;
        match self.family {
            Family::Circulant => make_circulant(d, p.r.unwrap_or(DEFAULT_CIRCULANT_R)),
            Family::Toeplitz => make_toeplitz(d, p.r.unwrap_or(DEFAULT_TOEPLITZ_R)),
            Family::DiagDominant => Ok(make_diag_dominant(d, self.seed)),
            Family::GeneralPsd => Ok(make_general_psd(d, self.seed)),
            Family::Kronecker => {
                let s = self.shape()?;
                Ok(make_kronecker(s.cols(), s.rows(), self.seed))
            }
            Family::Spiked => Ok(self.spiked_model()?.covariance),
        }
    }

    /// The spiked model described by a `spiked` spec: a fresh rank-`kbar`
    /// ground truth from the seed and identity noise.
    pub fn spiked_model(&self) -> Result<SpikedModel> {
        if self.family != Family::Spiked {
            return Err(Error::Config(format!("family {} is not spiked", self.family)));
        }
        let shape = self.shape()?;
        let xbar = random_rank_k_eigenmatrix(shape, self.params.kbar.unwrap_or(1), self.seed)?;
        make_spiked(self.params.lambda1.unwrap_or(100.0), xbar, Noise::Identity)
    }

    /// Sampler for this spec, using a structured exact sampler when the
    /// family has one.
    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        match self.family {
            Family::Toeplitz => {
                let r = self.params.r.unwrap_or(DEFAULT_TOEPLITZ_R);
                check_toeplitz_r(r)?;
                Ok(Sampler::Ar1 { d: self.dim()?, r })
            }
            Family::Spiked => Ok(Sampler::Spiked(Box::new(self.spiked_model()?))),
            _ => Sampler::dense(&self.build()?),
        }
    }
}

/// Eigenvalues of the symmetric circulant with first row `c`, in DFT order:
/// `lambda_m = sum_j c_j cos(2 pi j m / d)`.
pub fn circulant_eigenvalues(c: &[f64]) -> Vec<f64> {
    let d = c.len();
    let table: Vec<f64> = (0..d).map(|t| (2.0 * PI * t as f64 / d as f64).cos()).collect();
    (0..d)
        .map(|m| {
            c.iter()
                .enumerate()
                .map(|(j, cj)| cj * table[(j * m) % d])
                .sum()
        })
        .collect()
}

/// Symmetric circulant with first row `c_j = r^{min(j, d - j)}`.
pub fn make_circulant(d: usize, r: f64) -> Result<SymmetricMatrix> {
    if d == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    if !r.is_finite() {
        return Err(Error::param(format!("decay r must be finite, got {r}")));
    }
    let c: Vec<f64> = (0..d).map(|j| r.powi(j.min(d - j) as i32)).collect();
    let eig = circulant_eigenvalues(&c);
    let rho = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_RTOL * rho {
        return Err(Error::NotPsd(format!(
            "circulant with r = {r} has eigenvalue {min:.3e}"
        )));
    }
    Ok(SymmetricMatrix::from_lower_fn(d, |i, j| c[(i + d - j) % d]))
}

fn check_toeplitz_r(r: f64) -> Result<()> {
    if !(r.abs() < 1.0) {
        return Err(Error::param(format!("toeplitz decay must satisfy |r| < 1, got {r}")));
    }
    Ok(())
}

/// `Sigma_ij = r^{|i - j|}`.
pub fn make_toeplitz(d: usize, r: f64) -> Result<SymmetricMatrix> {
    check_toeplitz_r(r)?;
    if d == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    let pow: Vec<f64> = (0..d).map(|k| r.powi(k as i32)).collect();
    Ok(SymmetricMatrix::from_lower_fn(d, |i, j| pow[i - j]))
}

fn gaussian_mat(rows: usize, cols: usize, rng: &mut Stream) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `(B + B^T) / 2` with the diagonal replaced by the absolute row sum plus one.
pub fn make_diag_dominant(d: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = rng::stream(seed, &[keys::DIAG_DOMINANT]);
    let b = gaussian_mat(d, d, &mut rng);
    let mut m = Mat::from_fn(d, d, |i, j| 0.5 * (b[(i, j)] + b[(j, i)]));
    for i in 0..d {
        let off: f64 = (0..d).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        m[(i, i)] = off + 1.0;
    }
    SymmetricMatrix::new(m).expect("symmetric by construction")
}

fn gram_over(g: MatRef<'_, f64>, denom: f64) -> SymmetricMatrix {
    let n = g.nrows();
    let mut out = Mat::<f64>::zeros(n, n);
    matmul(out.as_mut(), Accum::Replace, g, g.transpose(), 1.0 / denom, Par::Seq);
    SymmetricMatrix::from_lower_triangle_of(out)
}

/// The two random factors `(Sigma_1, Sigma_2)` of [`make_kronecker`], each
/// `G G^T / p` with standard Gaussian `G`.
pub fn kronecker_factors(p1: usize, p2: usize, seed: u64) -> (SymmetricMatrix, SymmetricMatrix) {
    let g1 = gaussian_mat(p1, p1, &mut rng::stream(seed, &[keys::KRONECKER_LEFT]));
    let g2 = gaussian_mat(p2, p2, &mut rng::stream(seed, &[keys::KRONECKER_RIGHT]));
    (gram_over(g1.as_ref(), p1 as f64), gram_over(g2.as_ref(), p2 as f64))
}

/// `Sigma_1 ⊗ Sigma_2` with entry `[i p2 + r, j p2 + s] = Sigma_1[i, j] Sigma_2[r, s]`.
/// Its top eigenvector is `vec(v2 v1^T)` under a `p2 x p1` matricization.
pub fn make_kronecker(p1: usize, p2: usize, seed: u64) -> SymmetricMatrix {
    let (s1, s2) = kronecker_factors(p1, p2, seed);
    SymmetricMatrix::from_lower_fn(p1 * p2, |a, b| {
        s1.get(a / p2, b / p2) * s2.get(a % p2, b % p2)
    })
}

/// `G G^T / d` with `G` a `d x d` standard Gaussian matrix.
pub fn make_general_psd(d: usize, seed: u64) -> SymmetricMatrix {
    let g = gaussian_mat(d, d, &mut rng::stream(seed, &[keys::GENERAL_PSD]));
    gram_over(g.as_ref(), d as f64)
}

/// Noise covariance of a spiked model.
#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    Identity,
    Explicit(SymmetricMatrix),
}

/// `Abar = lambda1 xbar xbar^T + Sigma_eps`.
#[derive(Debug, Clone)]
pub struct SpikedModel {
    pub lambda1: f64,
    pub xbar: EigenMatrix,
    pub noise: Noise,
    pub covariance: SymmetricMatrix,
    /// Cholesky factor of an explicit noise covariance.
    noise_factor: Option<Mat<f64>>,
}

pub fn make_spiked(lambda1: f64, xbar: EigenMatrix, noise: Noise) -> Result<SpikedModel> {
    if !(lambda1 > 0.0) || !lambda1.is_finite() {
        return Err(Error::param(format!("lambda1 must be positive, got {lambda1}")));
    }
    if !xbar.is_unit(1e-9) {
        return Err(Error::param(format!(
            "xbar must have unit Frobenius norm, got {}",
            xbar.frobenius_norm()
        )));
    }
    let d = xbar.shape().dim();
    let x = vectorize(&xbar);
    let (covariance, noise_factor) = match &noise {
        Noise::Identity => (SymmetricMatrix::identity(d).rank_one_update(lambda1, &x)?, None),
        Noise::Explicit(s) => {
            if s.dim() != d {
                return Err(Error::shape(format!(
                    "noise covariance is {0}x{0} but xbar has d = {d}",
                    s.dim()
                )));
            }
            if !s.is_psd(PSD_RTOL)? {
                return Err(Error::NotPsd("noise covariance".into()));
            }
            let l = cholesky_factor(s)?;
            (s.rank_one_update(lambda1, &x)?, Some(l))
        }
    };
    Ok(SpikedModel {
        lambda1,
        xbar,
        noise,
        covariance,
        noise_factor,
    })
}

impl SpikedModel {
    /// `n` draws from `N(0, Abar)` as `sqrt(lambda1) g xbar + eps` with
    /// `g ~ N(0, 1)` and `eps ~ N(0, Sigma_eps)`; this has exactly the
    /// model's covariance without factorizing `Abar`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        Sampler::Spiked(Box::new(self.clone())).sample(n, seed)
    }
}

/// Product of a `p1 x kbar` and a `kbar x p2` matrix with i.i.d.
/// uniform(-1, 1) entries, normalized; resampled until the numerical rank
/// is exactly `kbar`.
pub fn random_rank_k_eigenmatrix(shape: Shape, kbar: usize, seed: u64) -> Result<EigenMatrix> {
    shape.check_rank(kbar)?;
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    for attempt in 0u64.. {
        let mut rng = rng::stream(seed, &[keys::EIGENMATRIX, attempt]);
        let a = Mat::from_fn(shape.rows(), kbar, |_, _| rng.sample(unif));
        let b = Mat::from_fn(kbar, shape.cols(), |_, _| rng.sample(unif));
        let x = EigenMatrix::from_mat(&a * &b)?;
        if x.frobenius_norm() > 0.0 && x.numerical_rank()? == kbar {
            return x.normalized();
        }
        if attempt >= 100 {
            break;
        }
    }
    Err(Error::numerical(format!(
        "could not draw a rank-{kbar} matrix of shape {shape}"
    )))
}

/// `n x d` matrix of draws, one per row.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub data: Mat<f64>,
    pub seed: u64,
    pub spec: Option<CovarianceSpec>,
}

impl SampleSet {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

fn cholesky_factor(cov: &SymmetricMatrix) -> Result<Mat<f64>> {
    let a = cov.as_mat();
    if let Ok(llt) = a.llt(Side::Lower) {
        return Ok(llt.L().to_owned());
    }
    let d = cov.dim();
    let maxdiag = (0..d).map(|i| a[(i, i)].abs()).fold(0.0f64, f64::max);
    let jitter = CHOLESKY_JITTER * maxdiag;
    let shifted = Mat::from_fn(d, d, |i, j| a[(i, j)] + if i == j { jitter } else { 0.0 });
    shifted
        .llt(Side::Lower)
        .map(|llt| llt.L().to_owned())
        .map_err(|_| {
            Error::NotPsd(format!(
                "Cholesky failed even with diagonal jitter {jitter:.3e}"
            ))
        })
}

/// How rows are drawn for a covariance.
#[derive(Debug, Clone)]
pub enum Sampler {
    /// `y = L z` with `L` lower triangular; `None` for the zero matrix.
    Dense { d: usize, factor: Option<Mat<f64>> },
    /// Stationary AR(1) with unit variance and lag-one correlation `r`,
    /// whose covariance is the Toeplitz matrix `r^{|i-j|}`.
    Ar1 { d: usize, r: f64 },
    Spiked(Box<SpikedModel>),
}

impl Sampler {
    pub fn dense(cov: &SymmetricMatrix) -> Result<Self> {
        let d = cov.dim();
        if cov.as_mat().norm_max() == 0.0 {
            return Ok(Sampler::Dense { d, factor: None });
        }
        Ok(Sampler::Dense {
            d,
            factor: Some(cholesky_factor(cov)?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Sampler::Dense { d, .. } | Sampler::Ar1 { d, .. } => *d,
            Sampler::Spiked(m) => m.xbar.shape().dim(),
        }
    }

    /// Row `i` uses its own counter stream, so the result does not depend on
    /// the order in which rows are produced.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(Error::param("sample size must be positive"));
        }
        let d = self.dim();
        let base = rng::derive_seed(seed, &[keys::NOISE]);
        let mut data = Mat::<f64>::zeros(n, d);
        let mut z = vec![0.0; d];
        let mut y = vec![0.0; d];
        let xbar = match self {
            Sampler::Spiked(m) => vectorize(&m.xbar),
            _ => Vec::new(),
        };
        for i in 0..n {
            let mut rng = rng::indexed_stream(base, i as u64);
            match self {
                Sampler::Dense { factor: None, .. } => continue,
                Sampler::Dense { factor: Some(l), .. } => {
                    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    lower_times(l.as_ref(), &z, &mut y);
                }
                Sampler::Ar1 { r, .. } => {
                    let s = (1.0 - r * r).sqrt();
                    let mut prev = rng.sample::<f64, _>(StandardNormal);
                    y[0] = prev;
                    for v in y.iter_mut().skip(1) {
                        prev = r * prev + s * rng.sample::<f64, _>(StandardNormal);
                        *v = prev;
                    }
                }
                Sampler::Spiked(m) => {
                    let g: f64 = rng.sample(StandardNormal);
                    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    match &m.noise_factor {
                        Some(l) => lower_times(l.as_ref(), &z, &mut y),
                        None => y.copy_from_slice(&z),
                    }
                    let a = m.lambda1.sqrt() * g;
                    y.iter_mut().zip(&xbar).for_each(|(v, x)| *v += a * x);
                }
            }
            for (j, v) in y.iter().enumerate() {
                data[(i, j)] = *v;
            }
        }
        if data.norm_max().is_nan() {
            return Err(Error::numerical("non-finite sample"));
        }
        Ok(SampleSet {
            data,
            seed,
            spec: None,
        })
    }
}

fn lower_times(l: MatRef<'_, f64>, z: &[f64], y: &mut [f64]) {
    let d = z.len();
    y.fill(0.0);
    for j in 0..d {
        let zj = z[j];
        if zj == 0.0 {
            continue;
        }
        let col = l.col(j);
        for i in j..d {
            y[i] += col[i] * zj;
        }
    }
}

/// `n` draws from `N(0, cov)` via a Cholesky factor of `cov` (jittered once
/// if needed). The zero matrix yields all-zero samples.
pub fn sample_gaussian(cov: &SymmetricMatrix, n: usize, seed: u64) -> Result<SampleSet> {
    Sampler::dense(cov)?.sample(n, seed)
}

/// Uncentered second moment `(1/n) sum_i y_i y_i^T`.
pub fn empirical_cov(samples: &SampleSet) -> Result<SymmetricMatrix> {
    let n = samples.n();
    if n == 0 {
        return Err(Error::param("empirical covariance of zero samples"));
    }
    Ok(gram_over(samples.data.transpose(), n as f64))
}

/// `x -> Y^T (Y x) / n`, the empirical covariance without forming it.
pub struct GramOperator<'a> {
    samples: MatRef<'a, f64>,
}

impl<'a> GramOperator<'a> {
    pub fn new(samples: &'a SampleSet) -> Result<Self> {
        if samples.n() == 0 {
            return Err(Error::param("empirical covariance of zero samples"));
        }
        Ok(Self {
            samples: samples.data.as_ref(),
        })
    }
}

impl LinearOperator for GramOperator<'_> {
    fn dim(&self) -> usize {
        self.samples.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut t = vec![0.0; self.samples.nrows()];
        linalg::gemv(self.samples, x, &mut t);
        linalg::gemv(self.samples.transpose(), &t, y);
        linalg::scale(y, 1.0 / self.samples.nrows() as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
        (a - b).norm_max()
    }

    #[test]
    fn circulant_first_row_and_shift() {
        let c = make_circulant(4, 0.5).unwrap();
        let row: Vec<f64> = (0..4).map(|j| c.get(0, j)).collect();
        assert_eq!(row, vec![1.0, 0.5, 0.25, 0.5]);
        for i in 1..4 {
            for j in 0..4 {
                assert_eq!(c.get(i, j), c.get(0, (j + 4 - i) % 4));
            }
        }
    }

    #[test]
    fn circulant_top_eigenvector_is_constant() {
        let c = make_circulant(16, 0.5).unwrap();
        let (_, v) = c.top_eigenpair().unwrap();
        for x in &v {
            assert!((x - 0.25).abs() < 1e-12);
        }
        let dft = circulant_eigenvalues(&(0..16).map(|j| c.get(0, j)).collect::<Vec<_>>());
        let mut dft_sorted = dft.clone();
        dft_sorted.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in dft_sorted.iter().zip(c.eigenvalues().unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn circulant_non_psd_rejected() {
        assert!(matches!(make_circulant(8, 3.0), Err(Error::NotPsd(_))));
    }

    #[test]
    fn toeplitz_examples() {
        let t = make_toeplitz(3, 0.9).unwrap();
        let want = [[1.0, 0.9, 0.81], [0.9, 1.0, 0.9], [0.81, 0.9, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.get(i, j) - want[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(make_toeplitz(5, 0.0).unwrap(), SymmetricMatrix::identity(5));
        assert!(make_toeplitz(3, 1.5).is_err());
        assert!(make_toeplitz(3, 1.0).is_err());
    }

    #[test]
    fn diag_dominant_examples() {
        let m = make_diag_dominant(64, 3);
        for i in 0..64 {
            let off: f64 = (0..64).filter(|&j| j != i).map(|j| m.get(i, j).abs()).sum();
            assert!(m.get(i, i) >= off + 1.0 - 1e-12);
            for j in 0..64 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert!(*m.eigenvalues().unwrap().last().unwrap() > 0.0);
        assert_eq!(m, make_diag_dominant(64, 3));
    }

    #[test]
    fn kronecker_examples() {
        let (p1, p2) = (4, 3);
        let s = make_kronecker(p1, p2, 5);
        let (s1, s2) = kronecker_factors(p1, p2, 5);
        let top = s.eigenvalues().unwrap()[0];
        let want = s1.eigenvalues().unwrap()[0] * s2.eigenvalues().unwrap()[0];
        assert!((top - want).abs() <= 1e-8 * want);
        let mut rng = rng::stream(1, &[]);
        for _ in 0..100 {
            let (i, j) = (rng.random_range(0..p1), rng.random_range(0..p1));
            let (r, t) = (rng.random_range(0..p2), rng.random_range(0..p2));
            assert_eq!(s.get(i * p2 + r, j * p2 + t), s1.get(i, j) * s2.get(r, t));
        }
        let spec = CovarianceSpec {
            params: FamilyParams { p1: Some(p1), p2: Some(p2), ..Default::default() },
            ..CovarianceSpec::new(Family::Kronecker, 12, 5)
        };
        let shape = spec.shape().unwrap();
        assert_eq!(shape, Shape::new(p2, p1).unwrap());
        let x = crate::solver::init_top_eigenmatrix(&spec.build().unwrap(), shape).unwrap();
        assert_eq!(x.numerical_rank().unwrap(), 1);
    }

    #[test]
    fn general_psd_examples() {
        let g = make_general_psd(30, 2);
        assert!(*g.eigenvalues().unwrap().last().unwrap() >= -1e-10);
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
    }

    #[test]
    fn spiked_examples() {
        let xbar = random_rank_k_eigenmatrix(Shape::square(4).unwrap(), 1, 7).unwrap();
        let m = make_spiked(5.0, xbar.clone(), Noise::Identity).unwrap();
        let ev = m.covariance.eigenvalues().unwrap();
        assert!((ev[0] - 6.0).abs() < 1e-12);
        assert!((ev[1] - 1.0).abs() < 1e-12);
        let (_, v) = m.covariance.top_eigenpair().unwrap();
        let r = crate::solver::estimation_error(
            &crate::tensorops::matricize(&v, xbar.shape()).unwrap(),
            &xbar,
        )
        .unwrap();
        assert!(r < 1e-10);
        assert!(make_spiked(0.0, xbar.clone(), Noise::Identity).is_err());
        assert!(make_spiked(5.0, xbar.scaled(2.0), Noise::Identity).is_err());
        assert!(make_spiked(100.0, xbar, Noise::Identity).is_ok());
    }

    #[test]
    fn rank_k_eigenmatrix() {
        let shape = Shape::new(6, 5).unwrap();
        for kbar in 1..=3 {
            let x = random_rank_k_eigenmatrix(shape, kbar, 11).unwrap();
            assert_eq!(x.numerical_rank().unwrap(), kbar);
            assert!(x.is_unit(1e-12));
            assert_eq!(x, random_rank_k_eigenmatrix(shape, kbar, 11).unwrap());
        }
        assert!(random_rank_k_eigenmatrix(shape, 6, 0).is_err());
    }

    #[test]
    fn zero_covariance_gives_zero_samples() {
        let s = sample_gaussian(&SymmetricMatrix::zeros(3), 5, 1).unwrap();
        assert_eq!(s.data.norm_max(), 0.0);
    }

    #[test]
    fn identity_sample_covariance_converges() {
        let s = sample_gaussian(&SymmetricMatrix::identity(4), 200_000, 3).unwrap();
        let c = empirical_cov(&s).unwrap();
        let err = (c.as_mat() - Mat::<f64>::identity(4, 4)).norm_l2();
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn diagonal_variances() {
        let cov = SymmetricMatrix::from_lower_fn(2, |i, j| if i == j { [4.0, 1.0][i] } else { 0.0 });
        let c = empirical_cov(&sample_gaussian(&cov, 10_000, 4).unwrap()).unwrap();
        assert!((c.get(0, 0) / 4.0 - 1.0).abs() < 0.1);
        assert!((c.get(1, 1) - 1.0).abs() < 0.1);
    }

    #[test]
    fn non_psd_sampling_fails() {
        let cov = SymmetricMatrix::from_lower_fn(2, |i, j| if i == j { [1.0, -1.0][i] } else { 0.0 });
        assert!(matches!(sample_gaussian(&cov, 3, 0), Err(Error::NotPsd(_))));
    }

    #[test]
    fn singular_psd_sampling_uses_jitter() {
        let cov = SymmetricMatrix::zeros(3).rank_one_update(1.0, &[1.0, 2.0, 3.0]).unwrap();
        let s = sample_gaussian(&cov, 4, 0).unwrap();
        // rows stay (numerically) on the line spanned by (1, 2, 3)
        for i in 0..4 {
            assert!((s.data[(i, 1)] - 2.0 * s.data[(i, 0)]).abs() < 1e-4);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cov = make_toeplitz(6, 0.5).unwrap();
        let a = sample_gaussian(&cov, 10, 9).unwrap();
        let b = sample_gaussian(&cov, 10, 9).unwrap();
        assert_eq!(a.data, b.data);
        let c = sample_gaussian(&cov, 4, 9).unwrap();
        assert_eq!(c.data.as_ref(), a.data.as_ref().subrows(0, 4));
    }

    #[test]
    fn empirical_cov_examples() {
        let one = SampleSet { data: Mat::from_fn(1, 3, |_, j| if j == 0 { 1.0 } else { 0.0 }), seed: 0, spec: None };
        let c = empirical_cov(&one).unwrap();
        let mut e = Mat::<f64>::zeros(3, 3);
        e[(0, 0)] = 1.0;
        assert_eq!(c.as_mat(), e.as_ref());

        let y = [0.3, -1.2, 2.0];
        let single = SampleSet { data: Mat::from_fn(1, 3, |_, j| y[j]), seed: 0, spec: None };
        let pair = SampleSet {
            data: Mat::from_fn(2, 3, |i, j| if i == 0 { y[j] } else { -y[j] }),
            seed: 0,
            spec: None,
        };
        assert!(max_abs_diff(empirical_cov(&single).unwrap().as_mat(), empirical_cov(&pair).unwrap().as_mat()) < 1e-15);

        let s = sample_gaussian(&make_toeplitz(8, 0.3).unwrap(), 50, 1).unwrap();
        let fast = empirical_cov(&s).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                let mut acc = 0.0;
                for i in (0..50).rev() {
                    acc += s.data[(i, a)] * s.data[(i, b)];
                }
                assert!((fast.get(a, b) - acc / 50.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_operator_matches_dense() {
        let s = sample_gaussian(&make_toeplitz(9, 0.6).unwrap(), 20, 2).unwrap();
        let dense = empirical_cov(&s).unwrap();
        let op = GramOperator::new(&s).unwrap();
        let x: Vec<f64> = (0..9).map(|t| (t as f64).cos()).collect();
        let mut y = vec![0.0; 9];
        op.apply(&x, &mut y);
        for (a, b) in y.iter().zip(dense.matvec(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ar1_sampler_matches_toeplitz() {
        let spec = CovarianceSpec { params: FamilyParams { r: Some(0.7), ..Default::default() }, ..CovarianceSpec::new(Family::Toeplitz, 5, 3) };
        let s = spec.sampler().unwrap().sample(100_000, 1).unwrap();
        let c = empirical_cov(&s).unwrap();
        let t = make_toeplitz(5, 0.7).unwrap();
        assert!(max_abs_diff(c.as_mat(), t.as_mat()) < 0.03);
    }

    #[test]
    fn spiked_sampler_matches_covariance() {
        let xbar = random_rank_k_eigenmatrix(Shape::square(2).unwrap(), 1, 1).unwrap();
        let m = make_spiked(3.0, xbar, Noise::Identity).unwrap();
        let c = empirical_cov(&m.sample(200_000, 5).unwrap()).unwrap();
        assert!(max_abs_diff(c.as_mat(), m.covariance.as_mat()) < 0.06);
        let explicit = make_spiked(3.0, m.xbar.clone(), Noise::Explicit(make_toeplitz(4, 0.5).unwrap())).unwrap();
        let c = empirical_cov(&explicit.sample(200_000, 5).unwrap()).unwrap();
        assert!(max_abs_diff(c.as_mat(), explicit.covariance.as_mat()) < 0.06);
    }

    #[test]
    fn spec_json() {
        let s = CovarianceSpec::from_json(r#"{"family":"toeplitz","d":16,"params":{"r":0.9},"seed":1}"#).unwrap();
        assert_eq!(s.build().unwrap(), make_toeplitz(16, 0.9).unwrap());
        assert!(CovarianceSpec::from_json(r#"{"family":"toeplitz","d":16,"params":{"rr":0.9}}"#).is_err());
        assert!(CovarianceSpec::from_json(r#"{"family":"toeplitz","d":16,"extra":1}"#).is_err());
        assert!(CovarianceSpec::from_json(r#"{"family":"general_psd","d":16,"params":{"r":0.9}}"#).is_err());
        let sp = CovarianceSpec::from_json(r#"{"family":"spiked","d":16,"params":{"lambda1":5.0},"seed":2}"#).unwrap();
        assert!((sp.build().unwrap().eigenvalues().unwrap()[0] - 6.0).abs() < 1e-12);
        assert!(matches!(
            CovarianceSpec::from_json(r#"{"family":"spiked","d":12}"#).unwrap().build(),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn generators_are_psd_and_symmetric() {
        let mats = [
            make_circulant(16, 0.5).unwrap(),
            make_toeplitz(16, 0.9).unwrap(),
            make_diag_dominant(16, 1),
            make_kronecker(4, 4, 1),
            make_general_psd(16, 1),
        ];
        for m in &mats {
            assert!(m.is_psd(PSD_RTOL).unwrap());
            assert_eq!(m.as_mat(), m.as_mat().transpose());
        }
    }
}
