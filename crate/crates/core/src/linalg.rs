//! Dense and matrix-free eigen helpers shared by the rest of the crate.
//!
//! Dense work is delegated to `faer`. The Lanczos routine here is the
//! matrix-free path used once a dense eigendecomposition stops being cheap
//! (roughly d > 1024 on a single core).

use faer::linalg::matmul::matmul;
use faer::{Accum, ColMut, ColRef, Mat, MatRef, Par, Side};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Largest dimension handled with a dense eigendecomposition by default.
pub const DENSE_EIGEN_MAX_DIM: usize = 1024;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn scale(a: &mut [f64], s: f64) {
    a.iter_mut().for_each(|x| *x *= s);
}

/// Flips `v` so that its largest-magnitude entry is positive (first such
/// index on ties). Returns the sign applied.
pub(crate) fn fix_sign(v: &mut [f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    if sign < 0.0 {
        scale(v, -1.0);
    }
    sign
}

/// `y = a * x` for a column-major dense matrix.
pub(crate) fn gemv(a: MatRef<'_, f64>, x: &[f64], y: &mut [f64]) {
    matmul(
        ColMut::from_slice_mut(y),
        Accum::Replace,
        a,
        ColRef::from_slice(x),
        1.0,
        Par::Seq,
    );
}

/// Symmetric eigendecomposition with eigenvalues in descending order and the
/// matching eigenvectors as columns.
pub(crate) fn sym_eigen_desc(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numerical(format!("symmetric eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite eigenvalue"));
    }
    Ok((values, vectors))
}

/// Eigenvalues in descending order.
pub(crate) fn sym_eigenvalues_desc(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let mut v = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical(format!("symmetric eigenvalues: {e:?}")))?;
    v.reverse();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite eigenvalue"));
    }
    Ok(v)
}

/// Thin SVD with descending singular values. Each left singular vector has
/// its largest-magnitude entry made positive; the right vector takes the
/// compensating sign.
pub(crate) fn svd_sign_fixed(x: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let svd = x
        .thin_svd()
        .map_err(|e| Error::numerical(format!("svd did not converge: {e:?}")))?;
    let r = svd.S().column_vector().nrows();
    let s: Vec<f64> = (0..r).map(|i| svd.S().column_vector()[i]).collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "svd produced non-finite singular values for a {}x{} input",
            x.nrows(),
            x.ncols()
        )));
    }
    let mut u = svd.U().to_owned();
    let mut v = svd.V().to_owned();
    for j in 0..r {
        let sign = fix_sign(u.col_as_slice_mut(j));
        if sign < 0.0 {
            scale(v.col_as_slice_mut(j), -1.0);
        }
    }
    Ok((u, s, v))
}

pub(crate) fn singular_values(x: MatRef<'_, f64>) -> Result<Vec<f64>> {
    x.singular_values()
        .map_err(|e| Error::numerical(format!("singular values: {e:?}")))
}

/// `rows x cols` matrix with orthonormal columns drawn from the Haar measure
/// (QR of a Gaussian matrix with the sign of R's diagonal fixed).
pub(crate) fn random_orthonormal(rows: usize, cols: usize, rng: &mut Stream) -> Mat<f64> {
    assert!(cols <= rows);
    let g = Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.compute_thin_Q();
    let r = qr.thin_R();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            scale(q.col_as_slice_mut(j), -1.0);
        }
    }
    q
}

/// Which end(s) of the spectrum a Lanczos run must resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Largest algebraic eigenvalue.
    Largest,
    /// Both the largest and the smallest algebraic eigenvalue.
    BothEnds,
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    pub target: Target,
    /// Converged once the Ritz residual is below `tol * max |ritz value|`.
    pub tol: f64,
    /// Basis size before an explicit restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    pub want_vectors: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            target: Target::Largest,
            tol: 1e-11,
            max_basis: 300,
            max_restarts: 40,
            want_vectors: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: f64,
    pub vector: Option<Vec<f64>>,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub largest: RitzPair,
    pub smallest: Option<RitzPair>,
    pub matvecs: usize,
}

/// Extreme eigenpairs of a symmetric operator by Lanczos with full
/// reorthogonalization and explicit restarts.
pub fn lanczos<F>(dim: usize, apply: F, opts: &LanczosOptions, rng: &mut Stream) -> Result<LanczosResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Err(Error::shape("lanczos on an empty operator"));
    }
    let mut start: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut matvecs = 0usize;
    let mut last: Option<LanczosResult> = None;

    for _restart in 0..=opts.max_restarts {
        let nrm = norm2(&start);
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::numerical("lanczos start vector vanished"));
        }
        scale(&mut start, 1.0 / nrm);
        let m_max = opts.max_basis.min(dim).max(1);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
        let mut alpha: Vec<f64> = Vec::with_capacity(m_max);
        let mut beta: Vec<f64> = Vec::with_capacity(m_max);
        basis.push(start.clone());
        let mut w = vec![0.0; dim];

        loop {
            let j = basis.len() - 1;
            apply(&basis[j], &mut w);
            matvecs += 1;
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::numerical("operator produced non-finite values"));
            }
            let a = dot(&basis[j], &w);
            alpha.push(a);
            // two passes of classical Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let b = norm2(&w);
            let m = alpha.len();
            let exhausted = b <= 1e-14 * alpha.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300)
                || m == dim;
            let check = exhausted || m == m_max || m % 10 == 0;
            if check {
                let res = ritz(&alpha, &beta, b, &basis, opts)?;
                let scale_ref = res
                    .largest
                    .value
                    .abs()
                    .max(res.smallest.as_ref().map_or(0.0, |s| s.value.abs()))
                    .max(1e-300);
                let done_large = res.largest.residual <= opts.tol * scale_ref;
                let done_small = res
                    .smallest
                    .as_ref()
                    .is_none_or(|s| s.residual <= opts.tol * scale_ref);
                if exhausted || (done_large && done_small) {
                    return Ok(LanczosResult { matvecs, ..res });
                }
                if m == m_max {
                    // restart from the current Ritz approximation(s)
                    let mut next = vec![0.0; dim];
                    let (yl, ys) = ritz_vectors(&alpha, &beta, &basis, opts.target)?;
                    next.iter_mut().zip(&yl).for_each(|(n, y)| *n += y);
                    if let Some(ys) = ys {
                        next.iter_mut().zip(&ys).for_each(|(n, y)| *n += y);
                    }
                    start = next;
                    last = Some(LanczosResult { matvecs, ..res });
                    break;
                }
            }
            beta.push(b);
            let mut q = std::mem::replace(&mut w, vec![0.0; dim]);
            scale(&mut q, 1.0 / b);
            basis.push(q);
        }
    }
    let last = last.expect("at least one restart cycle ran");
    Err(Error::numerical(format!(
        "lanczos did not converge after {} restarts ({} matvecs, residual {:.3e})",
        opts.max_restarts, last.matvecs, last.largest.residual
    )))
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Mat<f64>)> {
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    sym_eigen_desc(t.as_ref())
}

fn combine(basis: &[Vec<f64>], coeffs: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut y = vec![0.0; basis[0].len()];
    for (i, q) in basis.iter().enumerate() {
        let c = coeffs(i);
        y.iter_mut().zip(q).for_each(|(yi, qi)| *yi += c * qi);
    }
    y
}

fn ritz(
    alpha: &[f64],
    beta: &[f64],
    b_last: f64,
    basis: &[Vec<f64>],
    opts: &LanczosOptions,
) -> Result<LanczosResult> {
    let m = alpha.len();
    let (vals, vecs) = tridiagonal_eigen(alpha, &beta[..m - 1])?;
    let make = |idx: usize| RitzPair {
        value: vals[idx],
        residual: (b_last * vecs[(m - 1, idx)]).abs(),
        vector: opts.want_vectors.then(|| {
            let mut y = combine(basis, |i| vecs[(i, idx)]);
            let n = norm2(&y);
            scale(&mut y, 1.0 / n);
            y
        }),
    };
    Ok(LanczosResult {
        largest: make(0),
        smallest: (opts.target == Target::BothEnds).then(|| make(m - 1)),
        matvecs: 0,
    })
}

fn ritz_vectors(
    alpha: &[f64],
    beta: &[f64],
    basis: &[Vec<f64>],
    target: Target,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let m = alpha.len();
    let (_, vecs) = tridiagonal_eigen(alpha, &beta[..m - 1])?;
    let yl = combine(basis, |i| vecs[(i, 0)]);
    let ys = (target == Target::BothEnds).then(|| combine(basis, |i| vecs[(i, m - 1)]));
    Ok((yl, ys))
}
