//! Reshaping between vectors and matrices, rank truncation and the
//! Kronecker-structured projections `P_{V⊗U}`.
//!
//! Vectors and matrices are related by column stacking: entry `(i, j)` of a
//! `p1 x p2` matrix (0-based) sits at position `j * p1 + i` of its
//! vectorization. `faer` stores matrices column-major, so the two layouts
//! coincide and both directions are pure index permutations.

use std::fmt;
use std::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DENSE_EIGEN_MAX_DIM};
use crate::rng::Stream;
use crate::symmetric::SymmetricMatrix;

/// Singular values at or below `NUMERICAL_RANK_RTOL * sigma_1` do not count
/// towards the numerical rank.
pub const NUMERICAL_RANK_RTOL: f64 = 1e-10;
/// Tolerance on `U^T U = I` for projection pairs.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Default relative accuracy of [`spectral_norm`].
pub const SPECTRAL_NORM_RTOL: f64 = 1e-10;

/// Matricization shape `p1 x p2`, with ambient dimension `d = p1 * p2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    p1: usize,
    p2: usize,
}

impl Shape {
    pub fn new(p1: usize, p2: usize) -> Result<Self> {
        if p1 == 0 || p2 == 0 {
            return Err(Error::param(format!("shape sides must be positive, got {p1}x{p2}")));
        }
        p1.checked_mul(p2)
            .ok_or_else(|| Error::param(format!("shape {p1}x{p2} overflows")))?;
        Ok(Self { p1, p2 })
    }

    pub fn square(p: usize) -> Result<Self> {
        Self::new(p, p)
    }

    /// Square shape for an ambient dimension. Only perfect squares are
    /// accepted; other factorizations must be given explicitly.
    pub fn from_dim(d: usize) -> Result<Self> {
        let p = (d as f64).sqrt().round() as usize;
        if d == 0 || p * p != d {
            return Err(Error::shape(format!(
                "dimension {d} is not a perfect square; pass an explicit shape (--shape P1xP2) \
                 to choose the matricization"
            )));
        }
        Self::square(p)
    }

    pub fn rows(&self) -> usize {
        self.p1
    }

    pub fn cols(&self) -> usize {
        self.p2
    }

    pub fn dim(&self) -> usize {
        self.p1 * self.p2
    }

    /// Largest admissible rank bound, `min(p1, p2)`.
    pub fn max_rank(&self) -> usize {
        self.p1.min(self.p2)
    }

    pub fn check_rank(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.max_rank() {
            return Err(Error::param(format!(
                "rank bound k = {k} outside 1..={} for shape {self}",
                self.max_rank()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.p1, self.p2)
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::param(format!("shape must look like P1xP2, got {s:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::param(format!("bad shape component {t:?} in {s:?}")))
        };
        Shape::new(parse(a)?, parse(b)?)
    }
}

/// A `p1 x p2` real matrix: a matricized iterate or ground-truth eigenmatrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenMatrix {
    shape: Shape,
    data: Mat<f64>,
}

impl EigenMatrix {
    pub fn from_mat(data: Mat<f64>) -> Result<Self> {
        let shape = Shape::new(data.nrows(), data.ncols())?;
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            shape,
            data: Mat::from_fn(shape.rows(), shape.cols(), f),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm_l2()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            shape: self.shape,
            data: Mat::from_fn(self.shape.rows(), self.shape.cols(), |i, j| s * self.data[(i, j)]),
        }
    }

    /// Copy scaled to unit Frobenius norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.frobenius_norm();
        if n == 0.0 {
            return Err(Error::Degenerate("cannot normalize the zero matrix".into()));
        }
        if !n.is_finite() {
            return Err(Error::numerical("matrix has non-finite entries"));
        }
        Ok(self.scaled(1.0 / n))
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.frobenius_norm() - 1.0).abs() <= tol
    }

    /// Frobenius inner product `<X, Y>_F`, accumulated in column-stacked
    /// order so it equals `vectorize(X)^T vectorize(Y)` bit for bit.
    pub fn inner(&self, other: &EigenMatrix) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut acc = 0.0;
        for j in 0..self.shape.cols() {
            for i in 0..self.shape.rows() {
                acc += self.data[(i, j)] * other.data[(i, j)];
            }
        }
        Ok(acc)
    }

    pub fn sub(&self, other: &EigenMatrix) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            shape: self.shape,
            data: &self.data - &other.data,
        })
    }

    pub(crate) fn check_same_shape(&self, other: &EigenMatrix) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shapes differ: {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        linalg::singular_values(self.as_mat())
    }

    pub fn numerical_rank(&self) -> Result<usize> {
        self.numerical_rank_with(NUMERICAL_RANK_RTOL)
    }

    /// Count of singular values strictly above `rtol * sigma_1`.
    pub fn numerical_rank_with(&self, rtol: f64) -> Result<usize> {
        let s = self.singular_values()?;
        let Some(&s1) = s.first() else { return Ok(0) };
        if s1 == 0.0 {
            return Ok(0);
        }
        Ok(s.iter().filter(|&&x| x > rtol * s1).count())
    }
}

/// Column-stacked reshape of `x` into a `shape.rows() x shape.cols()` matrix:
/// `X[i, j] = x[j * p1 + i]`.
pub fn matricize(x: &[f64], shape: Shape) -> Result<EigenMatrix> {
    if x.len() != shape.dim() {
        return Err(Error::shape(format!(
            "vector of length {} cannot be matricized as {shape} (needs {})",
            x.len(),
            shape.dim()
        )));
    }
    let p1 = shape.rows();
    Ok(EigenMatrix::from_fn(shape, |i, j| x[j * p1 + i]))
}

/// Column stacking, the inverse of [`matricize`].
pub fn vectorize(x: &EigenMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.shape.dim());
    for j in 0..x.shape.cols() {
        out.extend_from_slice(x.data.col_as_slice(j));
    }
    out
}

/// Result of a rank-`k` truncation together with the subspaces it kept.
#[derive(Debug, Clone)]
pub struct RankTruncation {
    pub matrix: EigenMatrix,
    pub pair: ProjectionPair,
    /// All singular values of the input, descending.
    pub singular_values: Vec<f64>,
}

/// Best rank-`k` Frobenius approximation `P_U X P_V^T` of `x`.
pub fn rank_truncate(x: &EigenMatrix, k: usize) -> Result<EigenMatrix> {
    Ok(rank_truncate_full(x, k)?.matrix)
}

/// [`rank_truncate`] returning the kept singular subspaces as well.
///
/// Ties between equal singular values keep the first `k` columns returned
/// by the SVD; each kept left vector has its largest-magnitude entry made
/// positive with the compensating sign on the right vector.
pub fn rank_truncate_full(x: &EigenMatrix, k: usize) -> Result<RankTruncation> {
    x.shape.check_rank(k)?;
    let (u, s, v) = linalg::svd_sign_fixed(x.as_mat())?;
    let uk = u.subcols(0, k).to_owned();
    let vk = v.subcols(0, k).to_owned();
    let us = Mat::from_fn(uk.nrows(), k, |i, j| uk[(i, j)] * s[j]);
    let data = &us * vk.transpose();
    if data.norm_max().is_nan() {
        return Err(Error::numerical("rank truncation produced NaN"));
    }
    Ok(RankTruncation {
        matrix: EigenMatrix {
            shape: x.shape,
            data,
        },
        pair: ProjectionPair { u: uk, v: vk },
        singular_values: s,
    })
}

/// `vectorize(rank_truncate(matricize(x, shape), k))`.
pub fn rank_truncate_vec(x: &[f64], shape: Shape, k: usize) -> Result<Vec<f64>> {
    Ok(vectorize(&rank_truncate(&matricize(x, shape)?, k)?))
}

/// Orthonormal bases `U` (`p1 x k`) and `V` (`p2 x k`) defining the
/// projector `P_{V⊗U} = (V V^T) ⊗ (U U^T)` on column-stacked vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    u: Mat<f64>,
    v: Mat<f64>,
}

impl ProjectionPair {
    /// Checks `U^T U = I` and `V^T V = I` within [`ORTHONORMAL_TOL`].
    pub fn new(u: Mat<f64>, v: Mat<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::shape(format!(
                "U has {} columns but V has {}",
                u.ncols(),
                v.ncols()
            )));
        }
        let k = u.ncols();
        if k == 0 || k > u.nrows() || k > v.nrows() {
            return Err(Error::param(format!(
                "rank {k} invalid for bases with {} and {} rows",
                u.nrows(),
                v.nrows()
            )));
        }
        for (name, b) in [("U", &u), ("V", &v)] {
            let g = b.transpose() * b;
            let dev = (&g - Mat::<f64>::identity(k, k)).norm_max();
            if dev > ORTHONORMAL_TOL {
                return Err(Error::param(format!(
                    "{name} is not orthonormal (max |{name}^T {name} - I| = {dev:.3e})"
                )));
            }
        }
        Ok(Self { u, v })
    }

    /// Haar-random pair of rank `k`.
    pub fn random(shape: Shape, k: usize, rng: &mut Stream) -> Result<Self> {
        shape.check_rank(k)?;
        let u = linalg::random_orthonormal(shape.rows(), k, rng);
        let v = linalg::random_orthonormal(shape.cols(), k, rng);
        Ok(Self { u, v })
    }

    /// Pair whose projector is the identity on a square shape.
    pub fn full(shape: Shape) -> Result<Self> {
        if shape.rows() != shape.cols() {
            return Err(Error::shape("a full-rank pair needs a square shape"));
        }
        let p = shape.rows();
        Ok(Self {
            u: Mat::identity(p, p),
            v: Mat::identity(p, p),
        })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn u(&self) -> MatRef<'_, f64> {
        self.u.as_ref()
    }

    pub fn v(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    pub fn shape(&self) -> Shape {
        Shape {
            p1: self.u.nrows(),
            p2: self.v.nrows(),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.shape().dim() {
            return Err(Error::shape(format!(
                "operand of dimension {d} does not match projection shape {} (d = {})",
                self.shape(),
                self.shape().dim()
            )));
        }
        Ok(())
    }

    /// `P_U X P_V^T`.
    pub fn project_matrix(&self, x: &EigenMatrix) -> Result<EigenMatrix> {
        if x.shape() != self.shape() {
            return Err(Error::shape(format!(
                "matrix shape {} does not match projection shape {}",
                x.shape(),
                self.shape()
            )));
        }
        let core = self.u.transpose() * x.as_mat() * &self.v;
        Ok(EigenMatrix {
            shape: x.shape(),
            data: &self.u * core * self.v.transpose(),
        })
    }

    /// `P_{V⊗U} y = vec(P_U mat(y) P_V^T)` without forming the projector.
    pub fn project_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        let shape = self.shape();
        Ok(vectorize(&self.project_matrix(&matricize(y, shape)?)?))
    }

    /// Coordinates of `y` in the orthonormal basis `V⊗U`: `vec(U^T mat(y) V)`.
    pub fn compress_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        let y = matricize(y, self.shape())?;
        let core = self.u.transpose() * y.as_mat() * &self.v;
        Ok(vectorize(&EigenMatrix::from_mat(core)?))
    }

    /// Inverse of [`compress_vec`](Self::compress_vec) on the range:
    /// `vec(U C V^T)` with `C = mat_k(c)`.
    pub fn expand_vec(&self, c: &[f64]) -> Result<Vec<f64>> {
        let k = self.rank();
        let core = matricize(c, Shape::square(k)?)?;
        let full = &self.u * core.as_mat() * self.v.transpose();
        Ok(vectorize(&EigenMatrix::from_mat(full)?))
    }

    /// `m * (V⊗U)` for an `r x d` matrix `m`, giving `r x k²`. Column
    /// `c + k*e` of the result pairs `U[:, c]` with `V[:, e]`.
    ///
    /// Done as two batched contractions, `O(r d k + r p2 k²)`, instead of
    /// forming the `d x k²` basis.
    pub fn compress_cols(&self, m: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_dim(m.ncols())?;
        let (p1, p2, k, r) = (self.u.nrows(), self.v.nrows(), self.rank(), m.nrows());
        // stage 1: contract the row index of X with U; column b + p2*c
        let mut t1 = Mat::<f64>::zeros(r, p2 * k);
        let mut block = Mat::<f64>::zeros(r, k);
        for b in 0..p2 {
            matmul(
                block.as_mut(),
                Accum::Replace,
                m.subcols(b * p1, p1),
                self.u.as_ref(),
                1.0,
                Par::Seq,
            );
            for c in 0..k {
                t1.col_as_slice_mut(b + p2 * c)
                    .copy_from_slice(block.col_as_slice(c));
            }
        }
        // stage 2: contract the column index of X with V
        let mut out = Mat::<f64>::zeros(r, k * k);
        for c in 0..k {
            matmul(
                block.as_mut(),
                Accum::Replace,
                t1.as_ref().subcols(p2 * c, p2),
                self.v.as_ref(),
                1.0,
                Par::Seq,
            );
            for e in 0..k {
                out.col_as_slice_mut(c + k * e)
                    .copy_from_slice(block.col_as_slice(e));
            }
        }
        Ok(out)
    }

    /// `(V⊗U)^T A (V⊗U)`: the `k² x k²` restriction of `A` to the range of
    /// the projector. Its spectrum is the nonzero spectrum of `P A P`.
    pub fn compress(&self, a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        let aw = self.compress_cols(a.as_mat())?;
        let waw = self.compress_cols(aw.transpose())?;
        SymmetricMatrix::with_tolerance(waw, 1e-9)
    }

    /// The `d x d` projector `P_{V⊗U}`. Only for oracles and small sizes.
    pub fn kron_projector(&self) -> Mat<f64> {
        let pu = &self.u * self.u.transpose();
        let pv = &self.v * self.v.transpose();
        let (p1, p2) = (pu.nrows(), pv.nrows());
        // row (i, j) -> i + p1 j
        Mat::from_fn(p1 * p2, p1 * p2, |row, col| {
            let (i, j) = (row % p1, row / p1);
            let (r, s) = (col % p1, col / p1);
            pu[(i, r)] * pv[(j, s)]
        })
    }
}

/// `P_{V⊗U} A P_{V⊗U}`, assembled from the compressed `k² x k²` block
/// without materializing the `d x d` projector.
pub fn project_kron(a: &SymmetricMatrix, pair: &ProjectionPair) -> Result<SymmetricMatrix> {
    let d = a.dim();
    pair.check_dim(d)?;
    let core = pair.compress(a)?.into_mat();
    let kk = core.nrows();
    // G = W C is d x k²; P A P = W C W^T = (W G^T)^T, one column at a time
    let mut g = Mat::<f64>::zeros(d, kk);
    for j in 0..kk {
        let col = pair.expand_vec(core.col_as_slice(j))?;
        g.col_as_slice_mut(j).copy_from_slice(&col);
    }
    let gt = g.transpose().to_owned();
    let mut out = Mat::<f64>::zeros(d, d);
    for j in 0..d {
        let col = pair.expand_vec(gt.col_as_slice(j))?;
        out.col_as_slice_mut(j).copy_from_slice(&col);
    }
    SymmetricMatrix::with_tolerance(out, 1e-9)
}

/// `rho(A) = max(|lambda_max|, |lambda_min|)`.
pub fn spectral_norm(a: &SymmetricMatrix) -> Result<f64> {
    spectral_norm_with(a, SPECTRAL_NORM_RTOL)
}

/// [`spectral_norm`] with an explicit relative tolerance for the
/// matrix-free path (dense eigendecomposition is used up to
/// [`DENSE_EIGEN_MAX_DIM`]).
pub fn spectral_norm_with(a: &SymmetricMatrix, rtol: f64) -> Result<f64> {
    if a.dim() == 0 {
        return Ok(0.0);
    }
    if a.dim() <= DENSE_EIGEN_MAX_DIM {
        let v = a.eigenvalues()?;
        return Ok(v[0].abs().max(v[v.len() - 1].abs()));
    }
    let opts = linalg::LanczosOptions {
        target: linalg::Target::BothEnds,
        tol: rtol,
        want_vectors: false,
        ..Default::default()
    };
    let mut rng = crate::rng::stream(0, &[crate::rng::keys::LANCZOS]);
    let res = linalg::lanczos(a.dim(), |x, y| linalg::gemv(a.as_mat(), x, y), &opts, &mut rng)?;
    let small = res.smallest.map_or(0.0, |s| s.value.abs());
    Ok(res.largest.value.abs().max(small))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn mat(rows: &[&[f64]]) -> EigenMatrix {
        EigenMatrix::from_mat(Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])).unwrap()
    }

    fn gaussian(shape: Shape, seed: u64) -> EigenMatrix {
        let mut rng = stream(seed, &[]);
        EigenMatrix::from_fn(shape, |_, _| rng.sample(StandardNormal))
    }

    fn random_sym(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = stream(seed, &[99]);
        let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        SymmetricMatrix::from_lower_fn(n, |i, j| (g[(i, j)] + g[(j, i)]) / 2.0)
    }

    #[test]
    fn matricize_examples() {
        let s = Shape::square(2).unwrap();
        assert_eq!(matricize(&[1., 2., 3., 4.], s).unwrap(), mat(&[&[1., 3.], &[2., 4.]]));
        assert_eq!(
            matricize(&[5.], Shape::square(1).unwrap()).unwrap(),
            mat(&[&[5.]])
        );
        let x = matricize(&[1., 2., 4., 8.], s).unwrap();
        assert_eq!(x, mat(&[&[1., 4.], &[2., 8.]]));
        assert_eq!(x.numerical_rank().unwrap(), 1);
    }

    #[test]
    fn matricize_length_mismatch() {
        let err = matricize(&[1., 2., 3.], Shape::square(2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn vectorize_example() {
        assert_eq!(vectorize(&mat(&[&[1., 3.], &[2., 4.]])), vec![1., 2., 3., 4.]);
    }

    #[test]
    fn index_law_exhaustive() {
        // X_{i,j} = x_{(j-1) p1 + i} in 1-based indexing
        for p1 in 1..=5 {
            for p2 in 1..=5 {
                let shape = Shape::new(p1, p2).unwrap();
                let x: Vec<f64> = (0..p1 * p2).map(|t| t as f64).collect();
                let m = matricize(&x, shape).unwrap();
                for i1 in 1..=p1 {
                    for j1 in 1..=p2 {
                        assert_eq!(m.get(i1 - 1, j1 - 1), x[(j1 - 1) * p1 + i1 - 1]);
                    }
                }
            }
        }
    }

    #[test]
    fn shape_from_dim() {
        assert_eq!(Shape::from_dim(64).unwrap(), Shape::square(8).unwrap());
        let err = Shape::from_dim(12).unwrap_err().to_string();
        assert!(err.contains("--shape"), "{err}");
        assert_eq!("3x4".parse::<Shape>().unwrap(), Shape::new(3, 4).unwrap());
        assert!("3by4".parse::<Shape>().is_err());
        assert!(Shape::new(0, 3).is_err());
    }

    #[test]
    fn truncate_examples() {
        let i2 = mat(&[&[1., 0.], &[0., 1.]]);
        let t = rank_truncate(&i2, 2).unwrap();
        assert!(t.sub(&i2).unwrap().frobenius_norm() < 1e-14);

        let d = mat(&[&[3., 0.], &[0., 1.]]);
        let t = rank_truncate(&d, 1).unwrap();
        assert!(t.sub(&mat(&[&[3., 0.], &[0., 0.]])).unwrap().frobenius_norm() < 1e-14);

        let r1 = mat(&[&[1., 4.], &[2., 8.]]);
        let t = rank_truncate(&r1, 1).unwrap();
        assert!(t.sub(&r1).unwrap().frobenius_norm() < 1e-13);
    }

    #[test]
    fn truncate_vec_examples() {
        let s = Shape::square(2).unwrap();
        let t = rank_truncate_vec(&[3., 0., 0., 1.], s, 1).unwrap();
        for (a, b) in t.iter().zip([3., 0., 0., 0.]) {
            assert!((a - b).abs() < 1e-14);
        }
        // outer product is a fixed point
        let s = Shape::new(3, 4).unwrap();
        let (u, v) = ([1., -2., 0.5], [0.3, 1., -1., 2.]);
        let x: Vec<f64> = (0..12).map(|t| u[t % 3] * v[t / 3]).collect();
        let t = rank_truncate_vec(&x, s, 1).unwrap();
        for (a, b) in t.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
        let x = vectorize(&gaussian(Shape::new(4, 6).unwrap(), 3));
        let t = rank_truncate_vec(&x, Shape::new(4, 6).unwrap(), 4).unwrap();
        for (a, b) in t.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn truncate_rank_out_of_range() {
        let x = gaussian(Shape::new(3, 5).unwrap(), 0);
        assert!(matches!(rank_truncate(&x, 0), Err(Error::Parameter(_))));
        assert!(matches!(rank_truncate(&x, 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn truncation_sign_convention() {
        let x = gaussian(Shape::new(5, 4).unwrap(), 8);
        let t = rank_truncate_full(&x, 2).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..5).map(|i| t.pair.u()[(i, j)]).collect();
            let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn eckart_young_sampled() {
        let shape = Shape::new(6, 5).unwrap();
        let x = gaussian(shape, 11);
        let k = 2;
        let t = rank_truncate_full(&x, k).unwrap();
        let best = x.sub(&t.matrix).unwrap().frobenius_norm();
        let tail: f64 = t.singular_values[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((best - tail).abs() <= 1e-9 * tail);
        let mut rng = stream(12, &[]);
        for _ in 0..1000 {
            let a = Mat::from_fn(6, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = Mat::from_fn(k, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cand = EigenMatrix::from_mat(&a * &b).unwrap();
            let cand = cand.scaled(x.frobenius_norm() / cand.frobenius_norm());
            assert!(best <= x.sub(&cand).unwrap().frobenius_norm());
        }
    }

    #[test]
    fn full_pair_projection_is_identity() {
        let shape = Shape::square(3).unwrap();
        let a = random_sym(9, 4);
        let pa = project_kron(&a, &ProjectionPair::full(shape).unwrap()).unwrap();
        assert!((pa.as_mat() - a.as_mat()).norm_max() < 1e-10);
    }

    #[test]
    fn projection_keeps_spike_in_range() {
        let shape = Shape::square(4).unwrap();
        let mut rng = stream(6, &[]);
        let pair = ProjectionPair::random(shape, 2, &mut rng).unwrap();
        // X = u1 v1^T lies in the range of the pair
        let xbar = EigenMatrix::from_fn(shape, |i, j| pair.u()[(i, 0)] * pair.v()[(j, 0)]);
        let x = vectorize(&xbar);
        let a = SymmetricMatrix::zeros(16).rank_one_update(7.0, &x).unwrap();
        let pa = project_kron(&a, &pair).unwrap();
        assert!((pa.as_mat() - a.as_mat()).norm_max() < 1e-12);
    }

    #[test]
    fn project_kron_matches_dense_projector() {
        let shape = Shape::new(3, 4).unwrap();
        let a = random_sym(12, 5);
        let pair = ProjectionPair::random(shape, 2, &mut stream(7, &[])).unwrap();
        let p = pair.kron_projector();
        let dense = &p * a.as_mat() * &p;
        let fast = project_kron(&a, &pair).unwrap();
        assert!((fast.as_mat() - &dense).norm_max() < 1e-12);
        let y: Vec<f64> = (0..12).map(|t| (t as f64).sin()).collect();
        let py = pair.project_vec(&y).unwrap();
        let dense_py = &p * faer::ColRef::from_slice(&y);
        for i in 0..12 {
            assert!((py[i] - dense_py[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn spectral_norm_examples() {
        let a = SymmetricMatrix::from_lower_fn(2, |i, j| if i == j { [-3.0, 2.0][i] } else { 0.0 });
        assert!((spectral_norm(&a).unwrap() - 3.0).abs() < 1e-14);
        assert!((spectral_norm(&SymmetricMatrix::identity(7)).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_lanczos_path_matches_dense() {
        let a = random_sym(1100, 13);
        let fast = spectral_norm(&a).unwrap();
        let v = a.eigenvalues().unwrap();
        let dense = v[0].abs().max(v[v.len() - 1].abs());
        assert!((fast - dense).abs() <= 1e-8 * dense, "{fast} vs {dense}");
    }

    #[test]
    fn pair_rejects_non_orthonormal() {
        let u = Mat::from_fn(3, 1, |_, _| 1.0);
        assert!(ProjectionPair::new(u.clone(), u).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn roundtrip_and_inner_product(p1 in 1usize..7, p2 in 1usize..7, seed in any::<u64>()) {
            let shape = Shape::new(p1, p2).unwrap();
            let mut rng = stream(seed, &[]);
            let x: Vec<f64> = (0..shape.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = (0..shape.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let mx = matricize(&x, shape).unwrap();
            prop_assert_eq!(&vectorize(&mx), &x);
            prop_assert_eq!(matricize(&vectorize(&mx), shape).unwrap(), mx.clone());
            let my = matricize(&y, shape).unwrap();
            let direct: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            prop_assert_eq!(mx.inner(&my).unwrap(), direct);
        }

        #[test]
        fn truncation_idempotent_and_rank_bounded(p1 in 2usize..7, p2 in 2usize..7, seed in any::<u64>()) {
            let shape = Shape::new(p1, p2).unwrap();
            let x = gaussian(shape, seed);
            for k in 1..=shape.max_rank() {
                let t = rank_truncate(&x, k).unwrap();
                prop_assert!(t.numerical_rank().unwrap() <= k);
                let tt = rank_truncate(&t, k).unwrap();
                prop_assert!(tt.sub(&t).unwrap().frobenius_norm() <= 1e-10 * x.frobenius_norm().max(1.0));
            }
        }

        #[test]
        fn projection_contracts(seed in any::<u64>(), k in 1usize..4) {
            let shape = Shape::square(4).unwrap();
            let e = random_sym(16, seed);
            let pair = ProjectionPair::random(shape, k, &mut stream(seed, &[1])).unwrap();
            let pe = project_kron(&e, &pair).unwrap();
            prop_assert!(spectral_norm(&pe).unwrap() <= spectral_norm(&e).unwrap() + 1e-10);
        }
    }
}
