//! The regression data set `{y, A}` with an optional ground-truth signal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Response `y` (length M), design matrix `A` (M x N, column-major) and an
/// optional true signal `x0` (length N).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    y: DVector<f64>,
    a: DMatrix<f64>,
    x0: Option<DVector<f64>>,
    column_sq_norms: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(y: DVector<f64>, a: DMatrix<f64>, x0: Option<DVector<f64>>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!("design matrix must be non-empty, got {m}x{n}")));
        }
        if y.len() != m {
            return Err(Error::DimensionMismatch(format!("y has length {} but A has {m} rows", y.len())));
        }
        if let Some(x0) = &x0 {
            if x0.len() != n {
                return Err(Error::DimensionMismatch(format!("x0 has length {} but A has {n} columns", x0.len())));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("x0 contains non-finite entries".into()));
            }
        }
        if y.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("data contain non-finite entries".into()));
        }
        let column_sq_norms = (0..n)
            .map(|j| {
                let c = &a.as_slice()[j * m..(j + 1) * m];
                dot(c, c)
            })
            .collect();
        Ok(RegressionProblem { y, a, x0, column_sq_norms })
    }

    /// Number of samples M.
    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of coefficients N.
    pub fn n_cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn x0(&self) -> Option<&DVector<f64>> {
        self.x0.as_ref()
    }

    /// Column `j` of `A` as a contiguous slice.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.a.nrows();
        &self.a.as_slice()[j * m..(j + 1) * m]
    }

    pub fn column_sq_norms(&self) -> &[f64] {
        &self.column_sq_norms
    }

    /// `A x`.
    pub fn predict(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_rows());
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.column(j), out.as_mut_slice());
            }
        }
        out
    }

    /// `y - A x`.
    pub fn residual(&self, x: &[f64]) -> DVector<f64> {
        &self.y - self.predict(x)
    }

    /// Sub-problem made of the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> RegressionProblem {
        let n = self.n_cols();
        let a = DMatrix::from_fn(rows.len(), n, |r, c| self.a[(rows[r], c)]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        let column_sq_norms = (0..n)
            .map(|j| {
                let c = &a.as_slice()[j * rows.len()..(j + 1) * rows.len()];
                dot(c, c)
            })
            .collect();
        RegressionProblem { y, a, x0: self.x0.clone(), column_sq_norms }
    }

    /// The problem with row `mu` removed.
    pub fn without_row(&self, mu: usize) -> RegressionProblem {
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&r| r != mu).collect();
        self.select_rows(&rows)
    }

    /// Same data with the ground truth replaced.
    pub fn with_x0(mut self, x0: Option<DVector<f64>>) -> Result<Self> {
        if let Some(v) = &x0 {
            if v.len() != self.n_cols() {
                return Err(Error::DimensionMismatch(format!(
                    "x0 has length {} but A has {} columns",
                    v.len(),
                    self.n_cols()
                )));
            }
        }
        self.x0 = x0;
        Ok(self)
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..chunks {
        let i = 4 * k;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// `y += alpha x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
