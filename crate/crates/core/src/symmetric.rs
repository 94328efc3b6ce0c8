use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative tolerance accepted when checking symmetry of caller-supplied data.
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Dense real symmetric matrix. The stored data is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: Mat<f64>,
}

impl SymmetricMatrix {
    /// Wraps `data` after checking it is square and symmetric to within
    /// [`SYMMETRY_RTOL`] relative to its largest entry. The two triangles are
    /// averaged so the stored matrix is exactly symmetric.
    pub fn new(data: Mat<f64>) -> Result<Self> {
        Self::with_tolerance(data, SYMMETRY_RTOL)
    }

    pub fn with_tolerance(mut data: Mat<f64>, rtol: f64) -> Result<Self> {
        let n = data.nrows();
        if data.ncols() != n {
            return Err(Error::shape(format!(
                "symmetric matrix must be square, got {}x{}",
                n,
                data.ncols()
            )));
        }
        let scale = data.norm_max();
        if !scale.is_finite() {
            return Err(Error::numerical("matrix has non-finite entries"));
        }
        for j in 0..n {
            for i in (j + 1)..n {
                let (a, b) = (data[(i, j)], data[(j, i)]);
                if (a - b).abs() > rtol * scale {
                    return Err(Error::param(format!(
                        "matrix is not symmetric: |A[{i},{j}] - A[{j},{i}]| = {:.3e}",
                        (a - b).abs()
                    )));
                }
                let m = if a == b { a } else { 0.5 * (a + b) };
                data[(i, j)] = m;
                data[(j, i)] = m;
            }
        }
        Ok(Self { data })
    }

    /// Builds the matrix from its lower triangle: `f(i, j)` is called for
    /// `i >= j` only.
    pub fn from_lower_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Mat::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self { data }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: Mat::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: Mat::zeros(n, n),
        }
    }

    /// Copies the lower triangle onto the upper one.
    pub(crate) fn from_lower_triangle_of(mut data: Mat<f64>) -> Self {
        let n = data.nrows();
        debug_assert_eq!(n, data.ncols());
        for j in 0..n {
            for i in (j + 1)..n {
                data[(j, i)] = data[(i, j)];
            }
        }
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
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

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: Mat::from_fn(self.dim(), self.dim(), |i, j| s * self.data[(i, j)]),
        }
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::shape(format!(
                "cannot add {}x{} and {}x{} matrices",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    /// Adds `s * v v^T`.
    pub fn rank_one_update(&self, s: f64, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim() {
            return Err(Error::shape(format!(
                "rank-one update with vector of length {} on a {}x{} matrix",
                v.len(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(Self::from_lower_fn(self.dim(), |i, j| {
            self.data[(i, j)] + s * v[i] * v[j]
        }))
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        linalg::gemv(self.data.as_ref(), x, &mut y);
        y
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::sym_eigenvalues_desc(self.as_mat())
    }

    /// Eigenvalues in descending order with eigenvectors as matching columns.
    pub fn eigen(&self) -> Result<(Vec<f64>, Mat<f64>)> {
        linalg::sym_eigen_desc(self.as_mat())
    }

    /// Largest algebraic eigenvalue and its unit eigenvector, sign fixed so
    /// the largest-magnitude entry is positive.
    pub fn top_eigenpair(&self) -> Result<(f64, Vec<f64>)> {
        if self.dim() == 0 {
            return Err(Error::shape("empty matrix has no eigenpairs"));
        }
        let (vals, vecs) = self.eigen()?;
        let mut v = vecs.col_as_slice(0).to_vec();
        linalg::fix_sign(&mut v);
        Ok((vals[0], v))
    }

    /// True when every eigenvalue is at least `-rtol * rho(A)`.
    pub fn is_psd(&self, rtol: f64) -> Result<bool> {
        let vals = self.eigenvalues()?;
        let Some((&max, &min)) = vals.first().zip(vals.last()) else {
            return Ok(true);
        };
        let rho = max.abs().max(min.abs());
        Ok(min >= -rtol * rho)
    }
}
