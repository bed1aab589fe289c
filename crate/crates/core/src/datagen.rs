//! Synthetic instances, standardisation of external data and empirical
//! support-recovery metrics.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleParams;
use crate::error::{invalid, Error, Result};
use crate::problem::RegressionProblem;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub problem: RegressionProblem,
    pub ensemble: EnsembleParams,
    pub seed: u64,
}

/// `M = round(alpha N)`, halves rounded away from zero.
pub fn rows_for(n: usize, alpha: f64) -> usize {
    (alpha * n as f64).round() as usize
}

/// Draw `A`, `x0` and the noise from the ensemble and form `y = A x0 + noise`.
///
/// The draw order is fixed: all entries of `A` column by column, then the
/// signal component by component (Bernoulli mask, then the Gaussian value
/// when active), then the noise.
pub fn gen_instance(n: usize, ensemble: &EnsembleParams, seed: u64) -> Result<SyntheticInstance> {
    ensemble.validate()?;
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let m = rows_for(n, ensemble.alpha);
    if m == 0 {
        return Err(invalid(format!("alpha * N = {} rounds to zero rows", ensemble.alpha * n as f64)));
    }
    let mut rng = rng_from_seed(seed);
    let col_sd = 1.0 / (m as f64).sqrt();
    let a = DMatrix::from_fn(m, n, |_, _| col_sd * rng.sample::<f64, _>(StandardNormal));
    let sx = ensemble.sigma_x2.sqrt();
    let x0 = DVector::from_fn(n, |_, _| {
        if rng.random::<f64>() < ensemble.rho0 {
            sx * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    });
    let sd = ensemble.sigma_d2.sqrt();
    let noise = DVector::from_fn(m, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    let y = &a * &x0 + noise;
    let problem = RegressionProblem::new(y, a, Some(x0))?;
    Ok(SyntheticInstance { problem, ensemble: *ensemble, seed })
}

/// Affine map between original and standardised coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y_mean: f64,
    /// Per original column.
    pub column_means: Vec<f64>,
    /// Per original column; the centred column is divided by this. Zero for
    /// dropped columns.
    pub column_scales: Vec<f64>,
    /// Original indices of the retained columns, in order.
    pub kept: Vec<usize>,
    /// Original indices of columns dropped for having zero variance.
    pub dropped: Vec<usize>,
}

impl Standardization {
    /// Map standardised coefficients back to `(intercept, coefficients)` on
    /// the original scale.
    pub fn to_original(&self, x_std: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x_std.len() != self.kept.len() {
            return Err(Error::DimensionMismatch(format!("expected {} coefficients, got {}", self.kept.len(), x_std.len())));
        }
        let mut x = vec![0.0; self.column_means.len()];
        let mut intercept = self.y_mean;
        for (k, &j) in self.kept.iter().enumerate() {
            x[j] = x_std[k] / self.column_scales[j];
            intercept -= self.column_means[j] * x[j];
        }
        Ok((intercept, x))
    }

    /// Predictions on original-scale rows for standardised coefficients.
    pub fn predict_original(&self, a_original: &DMatrix<f64>, x_std: &[f64]) -> Result<DVector<f64>> {
        let (b0, x) = self.to_original(x_std)?;
        if a_original.ncols() != x.len() {
            return Err(Error::DimensionMismatch("design does not match the standardisation".into()));
        }
        Ok(a_original * DVector::from_vec(x) + DVector::from_element(a_original.nrows(), b0))
    }
}

/// Centre `y`; centre every column of `A` and scale it to unit Euclidean norm.
/// Columns with zero variance are dropped and recorded. A ground-truth signal,
/// if present, is carried over to the standardised scale.
pub fn standardize(problem: &RegressionProblem) -> Result<(RegressionProblem, Standardization)> {
    let m = problem.n_rows();
    let n = problem.n_cols();
    let y = problem.y();
    let y_mean = y.mean();
    let yc = y.map(|v| v - y_mean);

    let mut column_means = vec![0.0; n];
    let mut column_scales = vec![0.0; n];
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut cols: Vec<f64> = Vec::with_capacity(m * n);
    for j in 0..n {
        let c = problem.column(j);
        let mean = c.iter().sum::<f64>() / m as f64;
        let norm = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
        let size = c.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        column_means[j] = mean;
        if norm <= 1e-12 * size.max(f64::MIN_POSITIVE) * (m as f64).sqrt() || norm == 0.0 {
            log::warn!("column {j} has zero variance and is dropped");
            dropped.push(j);
            continue;
        }
        column_scales[j] = norm;
        kept.push(j);
        cols.extend(c.iter().map(|v| (v - mean) / norm));
    }
    if kept.is_empty() {
        return Err(invalid("every column has zero variance"));
    }
    let a = DMatrix::from_column_slice(m, kept.len(), &cols);
    let x0 = problem
        .x0()
        .map(|x0| DVector::from_iterator(kept.len(), kept.iter().map(|&j| x0[j] * column_scales[j])));
    let std = Standardization { y_mean, column_means, column_scales, kept, dropped };
    Ok((RegressionProblem::new(yc, a, x0)?, std))
}

/// Empirical true- and false-positive rates of the support of `x_hat`
/// against that of `x0`. A rate whose reference set is empty is `None`.
pub fn empirical_tp_fp(x_hat: &[f64], x0: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
    if x_hat.len() != x0.len() {
        return Err(Error::DimensionMismatch(format!("x_hat has length {} but x0 has {}", x_hat.len(), x0.len())));
    }
    let (mut pos, mut neg, mut tp, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&e, &t) in x_hat.iter().zip(x0) {
        if t != 0.0 {
            pos += 1;
            if e != 0.0 {
                tp += 1;
            }
        } else {
            neg += 1;
            if e != 0.0 {
                fp += 1;
            }
        }
    }
    let rate = |k: usize, d: usize| if d == 0 { None } else { Some(k as f64 / d as f64) };
    Ok((rate(tp, pos), rate(fp, neg)))
}

/// Squared distance of an ROC point from the ideal corner `(1, 0)`.
pub fn roc_r(tp: f64, fp: f64) -> f64 {
    (tp - 1.0) * (tp - 1.0) + fp * fp
}
