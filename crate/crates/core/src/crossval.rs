//! Cross-validation: literal leave-one-out and k-fold refits, the
//! approximate leave-one-out formula, instability detection along a
//! `lambda` curve, and model selection.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::ensemble::EnsembleParams;
use crate::error::{invalid, Error, Result};
use crate::penalty::PenaltySpec;
use crate::problem::{dot, RegressionProblem};
use crate::rng::{derive_seed, rng_from_seed};
use crate::solver::{coordinate_descent, input_mse, CdOptions, Estimate, SolutionPath};

pub const DEFAULT_K_DETECT: f64 = 3.0;
pub const DEFAULT_WINDOW: usize = 2;
/// Relative size of the smallest Cholesky pivot below which the Hessian
/// block is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CvMethod {
    Approx,
    LiteralLoo,
    Kfold,
}

impl fmt::Display for CvMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CvMethod::Approx => "APPROX",
            CvMethod::LiteralLoo => "LITERAL_LOO",
            CvMethod::Kfold => "KFOLD",
        })
    }
}

/// CV estimate at one regularisation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPointResult {
    pub lambda: f64,
    pub epsilon_cv: f64,
    /// `(1/2) Theta_mu r_mu^2` for the approximation, `(1/2) r_mu^2` of the
    /// held-out residual for the literal methods.
    pub per_sample_terms: Vec<f64>,
    pub error_bar: f64,
    pub method: CvMethod,
    /// Approximation only: the Hessian block was positive definite and every
    /// quadratic form lay in `[0, 1)`. Always true for literal methods.
    pub hessian_ok: bool,
    /// Literal methods only: every refit converged.
    pub all_converged: bool,
}

impl CvPointResult {
    fn from_terms(lambda: f64, terms: Vec<f64>, method: CvMethod, hessian_ok: bool, all_converged: bool) -> Self {
        let (mean, bar) = mean_and_error_bar(&terms);
        CvPointResult { lambda, epsilon_cv: mean, per_sample_terms: terms, error_bar: bar, method, hessian_ok, all_converged }
    }
}

/// Mean and `sd / sqrt(n)` with the `n - 1` sample deviation (zero bar for a
/// single term).
pub fn mean_and_error_bar(terms: &[f64]) -> (f64, f64) {
    let n = terms.len() as f64;
    if terms.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = terms.iter().sum::<f64>() / n;
    if terms.len() < 2 {
        return (mean, 0.0);
    }
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn held_out_term(problem: &RegressionProblem, mu: usize, x: &[f64]) -> f64 {
    let a = problem.design();
    let pred: f64 = (0..problem.n_cols()).map(|j| a[(mu, j)] * x[j]).sum();
    let r = problem.y()[mu] - pred;
    0.5 * r * r
}

/// Literal leave-one-out: refits on every `M - 1` row subset, each warm
/// started from `warm_start`, with coordinate-order seed
/// `derive_seed(seed, mu)`.
pub fn literal_loo(problem: &RegressionProblem, spec: &PenaltySpec, warm_start: &[f64], opts: &CdOptions, seed: u64) -> Result<CvPointResult> {
    let m = problem.n_rows();
    if m < 2 {
        return Err(invalid("leave-one-out needs at least two rows"));
    }
    let folds: Vec<Vec<usize>> = (0..m).map(|mu| vec![mu]).collect();
    run_folds(problem, spec, warm_start, opts, seed, &folds, CvMethod::LiteralLoo)
}

/// Random partition of `0..m` into `k` folds whose sizes differ by at most
/// one. Each fold is sorted.
pub fn kfold_partition(m: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > m {
        return Err(invalid(format!("k-fold needs 2 <= k <= M, got k={k}, M={m}")));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(seed, u64::MAX)));
    let mut folds = vec![Vec::new(); k];
    for (t, &i) in idx.iter().enumerate() {
        folds[t % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// k-fold CV. Each fold is refit warm-started from `warm_start`; its
/// coordinate-order seed is derived from the smallest held-out index, so
/// `k = M` reproduces [`literal_loo`] exactly.
pub fn kfold_cv(problem: &RegressionProblem, spec: &PenaltySpec, k: usize, warm_start: &[f64], opts: &CdOptions, seed: u64) -> Result<CvPointResult> {
    let folds = kfold_partition(problem.n_rows(), k, seed)?;
    run_folds(problem, spec, warm_start, opts, seed, &folds, CvMethod::Kfold)
}

fn run_folds(
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    warm_start: &[f64],
    opts: &CdOptions,
    seed: u64,
    folds: &[Vec<usize>],
    method: CvMethod,
) -> Result<CvPointResult> {
    spec.validate()?;
    if warm_start.len() != problem.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "warm start has length {} but problem has {} columns",
            warm_start.len(),
            problem.n_cols()
        )));
    }
    let m = problem.n_rows();
    let per_fold: Vec<(Vec<(usize, f64)>, bool)> = folds
        .par_iter()
        .map(|held| -> Result<_> {
            let mut out = vec![false; m];
            for &i in held {
                out[i] = true;
            }
            let train: Vec<usize> = (0..m).filter(|&r| !out[r]).collect();
            let sub = problem.select_rows(&train);
            let est = coordinate_descent(&sub, spec, warm_start, opts, derive_seed(seed, held[0] as u64))?;
            let terms = held.iter().map(|&mu| (mu, held_out_term(problem, mu, &est.x_hat))).collect();
            Ok((terms, est.converged))
        })
        .collect::<Result<_>>()?;
    let mut terms = vec![0.0; m];
    let mut all_converged = true;
    for (t, c) in per_fold {
        all_converged &= c;
        for (mu, v) in t {
            terms[mu] = v;
        }
    }
    Ok(CvPointResult::from_terms(spec.lambda, terms, method, true, all_converged))
}

/// Active columns of `A` and the Hessian block `A_S^T A_S + diag(J'')`.
fn active_hessian(problem: &RegressionProblem, estimate: &Estimate, spec: &PenaltySpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = &estimate.active_set;
    let m = problem.n_rows();
    let a_s = DMatrix::from_fn(m, s.len(), |r, c| problem.design()[(r, s[c])]);
    let mut g = DMatrix::zeros(s.len(), s.len());
    for p in 0..s.len() {
        for q in 0..=p {
            let v = dot(problem.column(s[p]), problem.column(s[q]));
            g[(p, q)] = v;
            g[(q, p)] = v;
        }
        g[(p, p)] += spec.curvature(estimate.x_hat[s[p]]);
    }
    (a_s, g)
}

/// Approximate leave-one-out error from the full-data fit alone:
/// `(1/M) sum_mu (1/2) Theta_mu r_mu^2` with
/// `Theta_mu = (1 - a_mu,S^T G^{-1} a_mu,S)^{-2}`.
///
/// A Hessian that is not positive definite, or a quadratic form outside
/// `[0, 1)`, clears `hessian_ok`; the value is still reported (NaN if `G` is
/// singular).
pub fn approx_loo(problem: &RegressionProblem, estimate: &Estimate, spec: &PenaltySpec) -> Result<CvPointResult> {
    spec.validate()?;
    if estimate.x_hat.len() != problem.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has length {} but problem has {} columns",
            estimate.x_hat.len(),
            problem.n_cols()
        )));
    }
    let m = problem.n_rows();
    let r = problem.residual(&estimate.x_hat);
    if estimate.active_set.is_empty() {
        let terms = r.iter().map(|v| 0.5 * v * v).collect();
        return Ok(CvPointResult::from_terms(spec.lambda, terms, CvMethod::Approx, true, true));
    }
    let (a_s, g) = active_hessian(problem, estimate, spec);
    let rhs = a_s.transpose();
    let scale = g.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let (z, mut ok) = match g.clone().cholesky() {
        Some(ch) => {
            // a pivot at rounding level means G is singular in all but name
            let l = ch.l_dirty();
            let pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            (Some(ch.solve(&rhs)), pivot > SINGULAR_PIVOT * scale)
        }
        None => (g.lu().solve(&rhs), false),
    };
    let Some(z) = z else {
        let terms = vec![f64::NAN; m];
        return Ok(CvPointResult::from_terms(spec.lambda, terms, CvMethod::Approx, false, true));
    };
    let terms: Vec<f64> = (0..m)
        .map(|mu| {
            let q: f64 = (0..a_s.ncols()).map(|i| a_s[(mu, i)] * z[(i, mu)]).sum();
            if !(0.0..1.0).contains(&q) {
                ok = false;
            }
            let d = 1.0 - q;
            0.5 * r[mu] * r[mu] / (d * d)
        })
        .collect();
    Ok(CvPointResult::from_terms(spec.lambda, terms, CvMethod::Approx, ok, true))
}

/// Direct evaluation of the same perturbative LOO estimate without the
/// rank-one shortcut: for each `mu` the reduced Hessian `G - a_mu a_mu^T` is
/// inverted explicitly and the LOO residual is
/// `r_mu (1 + a_mu^T (G - a_mu a_mu^T)^{-1} a_mu)`.
pub fn dense_loo_oracle(problem: &RegressionProblem, estimate: &Estimate, spec: &PenaltySpec) -> Result<Vec<f64>> {
    let r = problem.residual(&estimate.x_hat);
    if estimate.active_set.is_empty() {
        return Ok(r.iter().map(|v| 0.5 * v * v).collect());
    }
    let (a_s, g) = active_hessian(problem, estimate, spec);
    (0..problem.n_rows())
        .map(|mu| {
            let a: DVector<f64> = a_s.row(mu).transpose();
            let reduced = &g - &a * a.transpose();
            let inv = reduced.try_inverse().ok_or_else(|| Error::Numerical(format!("reduced Hessian for row {mu} is singular")))?;
            let loo = r[mu] * (1.0 + a.dot(&(inv * &a)));
            Ok(0.5 * loo * loo)
        })
        .collect()
}

/// Approximate LOO at every point of a path.
pub fn approx_loo_path(problem: &RegressionProblem, path: &SolutionPath) -> Result<Vec<CvPointResult>> {
    (0..path.len()).map(|k| approx_loo(problem, &path.estimates[k], &path.spec_at(k))).collect()
}

/// Literal LOO (`kfold = None`) or k-fold CV at every point of a path, each
/// warm-started from the path's full-data estimate at that point.
pub fn literal_cv_path(problem: &RegressionProblem, path: &SolutionPath, kfold: Option<usize>, opts: &CdOptions, seed: u64) -> Result<Vec<CvPointResult>> {
    (0..path.len())
        .map(|k| {
            let spec = path.spec_at(k);
            let warm = &path.estimates[k].x_hat;
            let s = derive_seed(seed, k as u64);
            match kfold {
                None => literal_loo(problem, &spec, warm, opts, s),
                Some(kf) => kfold_cv(problem, &spec, kf, warm, opts, s),
            }
        })
        .collect()
}

/// CV errors along a descending `lambda` grid with the stability mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub points: Vec<CvPointResult>,
    pub stable_mask: Vec<bool>,
    /// Largest `lambda` flagged irregular.
    pub lambda_c: Option<f64>,
}

impl CvCurve {
    pub fn stable_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.stable_mask.iter().enumerate().filter(|(_, s)| **s).map(|(k, _)| k)
    }

    /// Stable point with the smallest CV error.
    pub fn stable_minimum(&self) -> Option<usize> {
        self.stable_indices().min_by(|&x, &y| self.points[x].epsilon_cv.total_cmp(&self.points[y].epsilon_cv))
    }
}

/// Flags irregular points and cuts the curve at the largest irregular
/// `lambda`.
///
/// Point `j` is irregular when its value is NaN, its Hessian flag is clear,
/// or it differs from any of its `window` larger-`lambda` neighbours `n` by
/// more than `k_detect * error_bar_n`. Every point at or below the largest
/// irregular `lambda` is unstable.
pub fn detect_instability(points: Vec<CvPointResult>, k_detect: f64, window: usize) -> Result<CvCurve> {
    if !(k_detect > 0.0) {
        return Err(invalid(format!("k_detect must be positive, got {k_detect}")));
    }
    if window == 0 {
        return Err(invalid("window must be at least 1"));
    }
    if points.windows(2).any(|w| !(w[1].lambda < w[0].lambda)) {
        return Err(invalid("CV points must be ordered by strictly decreasing lambda"));
    }
    let irregular = |j: usize| {
        let p = &points[j];
        if !p.hessian_ok || !p.epsilon_cv.is_finite() {
            return true;
        }
        (j.saturating_sub(window)..j).any(|n| {
            let q = &points[n];
            (p.epsilon_cv - q.epsilon_cv).abs() > k_detect * q.error_bar
        })
    };
    let first = (0..points.len()).find(|&j| irregular(j));
    let stable_mask = (0..points.len()).map(|j| first.is_none_or(|f| j < f)).collect();
    let lambda_c = first.map(|f| points[f].lambda);
    Ok(CvCurve { points, stable_mask, lambda_c })
}

/// `((approx - literal) / literal)^2`.
pub fn normalized_mse(approx: f64, literal: f64) -> Result<f64> {
    if literal == 0.0 || !literal.is_finite() {
        return Err(invalid(format!("literal CV error must be finite and nonzero, got {literal}")));
    }
    let d = (approx - literal) / literal;
    Ok(d * d)
}

/// Point chosen by the one-standard-error rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub a: f64,
    pub lambda: f64,
    pub support_size: usize,
    pub cv_error: f64,
    pub error_bar: f64,
    /// Minimum stable CV error plus its error bar.
    pub threshold: f64,
    pub min_a: f64,
    pub min_lambda: f64,
}

/// Sparsest stable point whose CV error is within one error bar of the
/// stable minimum over all curves. Ties go to larger `lambda`, then larger
/// `a`. Each curve is paired with the path it was computed from.
pub fn one_std_error_select(candidates: &[(f64, &CvCurve, &SolutionPath)]) -> Result<Selection> {
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for (a, curve, path) in candidates {
        if curve.points.len() != path.len() {
            return Err(Error::DimensionMismatch("CV curve and path lengths differ".into()));
        }
        if let Some(k) = curve.stable_minimum() {
            let p = &curve.points[k];
            if best.is_none_or(|b| p.epsilon_cv < b.0) {
                best = Some((p.epsilon_cv, p.error_bar, *a, p.lambda));
            }
        }
    }
    let (min_err, min_bar, min_a, min_lambda) = best.ok_or(Error::NoStablePoints)?;
    let threshold = min_err + min_bar;
    let mut chosen: Option<Selection> = None;
    for (a, curve, path) in candidates {
        for k in curve.stable_indices() {
            let p = &curve.points[k];
            if !(p.epsilon_cv <= threshold) {
                continue;
            }
            let cand = Selection {
                a: *a,
                lambda: p.lambda,
                support_size: path.estimates[k].support_size(),
                cv_error: p.epsilon_cv,
                error_bar: p.error_bar,
                threshold,
                min_a,
                min_lambda,
            };
            let better = match &chosen {
                None => true,
                Some(c) => (cand.support_size, -cand.lambda, -cand.a) < (c.support_size, -c.lambda, -c.a),
            };
            if better {
                chosen = Some(cand);
            }
        }
    }
    chosen.ok_or(Error::NoStablePoints)
}

/// Monte-Carlo generalisation error of an estimate against its prediction
/// from the input MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationCheck {
    pub mc_generalization_error: f64,
    pub mc_standard_error: f64,
    pub predicted: f64,
    pub eps_x: f64,
}

const MC_CHUNK: usize = 8192;

/// Draws `n_fresh` rows `a ~ N(0, I/M)` with fresh noise and averages
/// `(1/2)(y - a^T x_hat)^2`; compares against `eps_x/alpha + sigma_d2/2`,
/// where `M` is the row count of `problem` and `alpha = M/N`.
pub fn generalization_gap_check(
    problem: &RegressionProblem,
    estimate: &Estimate,
    ens: &EnsembleParams,
    n_fresh: usize,
    seed: u64,
) -> Result<GeneralizationCheck> {
    let x0 = problem.x0().ok_or(Error::MissingGroundTruth)?;
    if n_fresh < 2 {
        return Err(invalid("need at least two fresh rows"));
    }
    let n = problem.n_cols();
    let m = problem.n_rows() as f64;
    let eps_x = input_mse(estimate, x0.as_slice())?;
    let alpha = m / n as f64;
    let predicted = eps_x / alpha + 0.5 * ens.sigma_d2;
    let diff: Vec<f64> = x0.iter().zip(&estimate.x_hat).map(|(a, b)| a - b).collect();
    let sd_row = 1.0 / m.sqrt();
    let sd_noise = ens.sigma_d2.sqrt();
    let chunks = n_fresh.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let len = MC_CHUNK.min(n_fresh - c * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let mut v = 0.0;
                for d in &diff {
                    v += sd_row * rng.sample::<f64, _>(StandardNormal) * d;
                }
                v += sd_noise * rng.sample::<f64, _>(StandardNormal);
                let t = 0.5 * v * v;
                s += t;
                s2 += t * t;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let nf = n_fresh as f64;
    let mean = s / nf;
    let var = (s2 - nf * mean * mean) / (nf - 1.0);
    Ok(GeneralizationCheck { mc_generalization_error: mean, mc_standard_error: (var.max(0.0) / nf).sqrt(), predicted, eps_x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_instance;
    use crate::penalty::PenaltyKind;
    use crate::solver::{geometric_grid, solve_path};
    use proptest::prelude::*;

    fn toy(m: usize, n: usize, seed: u64) -> RegressionProblem {
        let e = EnsembleParams::unit_power(m as f64 / n as f64, 0.3, 0.1).unwrap();
        gen_instance(n, &e, seed).unwrap().problem
    }

    fn point(lambda: f64, v: f64, bar: f64) -> CvPointResult {
        CvPointResult {
            lambda,
            epsilon_cv: v,
            per_sample_terms: vec![],
            error_bar: bar,
            method: CvMethod::Approx,
            hessian_ok: true,
            all_converged: true,
        }
    }

    #[test]
    fn error_bar_convention() {
        let (m, b) = mean_and_error_bar(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((b - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_error_bar(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn zero_estimate_approx_equals_literal() {
        let p = toy(20, 30, 1);
        let spec = PenaltySpec::scad(1e6, 3.0).unwrap();
        let est = coordinate_descent(&p, &spec, &vec![0.0; 30], &CdOptions::default(), 0).unwrap();
        assert!(est.active_set.is_empty());
        let ap = approx_loo(&p, &est, &spec).unwrap();
        let li = literal_loo(&p, &spec, &est.x_hat, &CdOptions::default(), 5).unwrap();
        let expect = p.y().iter().map(|v| 0.5 * v * v).sum::<f64>() / 20.0;
        assert!((ap.epsilon_cv - expect).abs() < 1e-14);
        assert_eq!(ap.per_sample_terms, li.per_sample_terms);
        assert!(ap.hessian_ok);
    }

    #[test]
    fn ols_loo_matches_hat_matrix() {
        // M = 3 rows, one column, lambda = 0: LOO residual r_mu / (1 - h_mu).
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let y = DVector::from_column_slice(&[1.0, 3.0, 0.5]);
        let p = RegressionProblem::new(y.clone(), a.clone(), None).unwrap();
        let spec = PenaltySpec::lasso(0.0).unwrap();
        let opts = CdOptions::default();
        let est = coordinate_descent(&p, &spec, &[0.0], &opts, 0).unwrap();
        let li = literal_loo(&p, &spec, &est.x_hat, &opts, 0).unwrap();
        let ap = approx_loo(&p, &est, &spec).unwrap();
        let aa: f64 = a.iter().map(|v| v * v).sum();
        let beta = a.iter().zip(y.iter()).map(|(u, v)| u * v).sum::<f64>() / aa;
        for mu in 0..3 {
            let h = a[(mu, 0)] * a[(mu, 0)] / aa;
            let r = (y[mu] - a[(mu, 0)] * beta) / (1.0 - h);
            assert!((li.per_sample_terms[mu] - 0.5 * r * r).abs() < 1e-12);
            assert!((ap.per_sample_terms[mu] - 0.5 * r * r).abs() < 1e-12);
        }
    }

    #[test]
    fn approx_matches_dense_oracle() {
        for (kind, seed) in [(PenaltyKind::Lasso, 3), (PenaltyKind::Scad, 4), (PenaltyKind::Mcp, 5)] {
            let p = toy(6, 4, seed);
            let spec = PenaltySpec::new(kind, 0.05, 3.0).unwrap();
            let est = coordinate_descent(&p, &spec, &[0.0; 4], &CdOptions::default(), 1).unwrap();
            let ap = approx_loo(&p, &est, &spec).unwrap();
            let dense = dense_loo_oracle(&p, &est, &spec).unwrap();
            for (x, y) in ap.per_sample_terms.iter().zip(&dense) {
                assert!((x - y).abs() <= 1e-10 * y.abs().max(1e-300), "{kind}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn lasso_hessian_has_no_penalty_term() {
        let p = toy(15, 10, 9);
        let spec = PenaltySpec::lasso(0.05).unwrap();
        let est = coordinate_descent(&p, &spec, &[0.0; 10], &CdOptions::default(), 1).unwrap();
        let (a_s, g) = active_hessian(&p, &est, &spec);
        assert!((g - a_s.transpose() * &a_s).abs().max() < 1e-13);
    }

    #[test]
    fn singular_hessian_is_flagged() {
        // duplicated column, both active under LASSO at lambda = 0 is singular
        let a = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        let p = RegressionProblem::new(DVector::from_column_slice(&[1.0, 2.0, 3.0]), a, None).unwrap();
        let spec = PenaltySpec::lasso(0.0).unwrap();
        let est = Estimate {
            x_hat: vec![1.0, 1.0],
            active_set: vec![0, 1],
            iterations: 1,
            converged: true,
            max_coord_delta: 0.0,
            seed: 0,
            skipped_columns: vec![],
        };
        let ap = approx_loo(&p, &est, &spec).unwrap();
        assert!(!ap.hessian_ok);
    }

    #[test]
    fn kfold_with_k_equal_m_is_loo() {
        let p = toy(12, 20, 2);
        let spec = PenaltySpec::scad(0.3, 3.0).unwrap();
        let opts = CdOptions::default();
        let est = coordinate_descent(&p, &spec, &[0.0; 20], &opts, 1).unwrap();
        let li = literal_loo(&p, &spec, &est.x_hat, &opts, 77).unwrap();
        let kf = kfold_cv(&p, &spec, 12, &est.x_hat, &opts, 77).unwrap();
        assert_eq!(li.per_sample_terms, kf.per_sample_terms);
        assert_eq!(li.epsilon_cv, kf.epsilon_cv);
        assert!(kfold_cv(&p, &spec, 13, &est.x_hat, &opts, 77).is_err());
        assert!(kfold_cv(&p, &spec, 1, &est.x_hat, &opts, 77).is_err());
    }

    #[test]
    fn kfold_partition_is_balanced() {
        let f = kfold_partition(23, 5, 4).unwrap();
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() == 4 || x.len() == 5));
        assert_eq!(f, kfold_partition(23, 5, 4).unwrap());
    }

    #[test]
    fn duplicated_rows_twofold_ols_hits_noise_level() {
        // every design row appears twice with independent noise; with M >> N
        // the OLS refit on either half is close to x0, so the held-out error
        // is the noise level sigma^2/2 up to the O(N/M) estimation term.
        let n = 5;
        let e = EnsembleParams::unit_power(40.0, 0.4, 0.1).unwrap();
        let inst = gen_instance(n, &e, 8).unwrap().problem;
        let m = inst.n_rows();
        let x0 = inst.x0().unwrap().clone();
        let mut rng = rng_from_seed(3);
        let base = inst.design().clone();
        let rows: Vec<usize> = (0..m).flat_map(|r| [r, r]).collect();
        let a = DMatrix::from_fn(2 * m, n, |r, c| base[(rows[r], c)]);
        let y = DVector::from_fn(2 * m, |r, _| {
            let s: f64 = (0..n).map(|c| a[(r, c)] * x0[c]).sum();
            s + 0.1f64.sqrt() * rng.sample::<f64, _>(StandardNormal)
        });
        let p = RegressionProblem::new(y, a, Some(x0)).unwrap();
        let spec = PenaltySpec::lasso(0.0).unwrap();
        let opts = CdOptions::default();
        let est = coordinate_descent(&p, &spec, &vec![0.0; n], &opts, 1).unwrap();
        let kf = kfold_cv(&p, &spec, 2, &est.x_hat, &opts, 11).unwrap();
        let target = 0.5 * 0.1 * (1.0 + n as f64 / (m as f64));
        assert!((kf.epsilon_cv - target).abs() < 3.0 * kf.error_bar + 0.01, "{} vs {target}", kf.epsilon_cv);
    }

    #[test]
    fn detector_examples() {
        let flat: Vec<_> = (0..20).map(|k| point(1.0 - 0.04 * k as f64, 0.5, 1e-6)).collect();
        let c = detect_instability(flat, 3.0, 2).unwrap();
        assert_eq!(c.lambda_c, None);
        assert!(c.stable_mask.iter().all(|s| *s));

        let lambdas = [0.2, 0.15, 0.1, 0.05, 0.02, 0.01];
        let mut pts: Vec<_> = lambdas.iter().map(|&l| point(l, 1.0, 0.01)).collect();
        pts[3].epsilon_cv = 2.0;
        let c = detect_instability(pts, 3.0, 2).unwrap();
        assert_eq!(c.lambda_c, Some(0.05));
        assert_eq!(c.stable_mask, vec![true, true, true, false, false, false]);

        let mut pts: Vec<_> = lambdas.iter().map(|&l| point(l, 1.0, 0.01)).collect();
        pts[1].hessian_ok = false;
        assert_eq!(detect_instability(pts, 3.0, 2).unwrap().lambda_c, Some(0.15));

        let short = vec![point(1.0, 1.0, 0.1), point(0.5, 1.05, 0.1)];
        assert_eq!(detect_instability(short, 3.0, 5).unwrap().lambda_c, None);
    }

    #[test]
    fn normalized_mse_examples() {
        assert_eq!(normalized_mse(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(normalized_mse(2.0, 1.0).unwrap(), 1.0);
        assert!(normalized_mse(1.0, 0.0).is_err());
    }

    fn fixture_path(lambdas: &[f64], supports: &[usize]) -> SolutionPath {
        let estimates = supports
            .iter()
            .map(|&k| {
                let mut x = vec![0.0; 10];
                x[..k].iter_mut().for_each(|v| *v = 1.0);
                Estimate {
                    active_set: (0..k).collect(),
                    x_hat: x,
                    iterations: 1,
                    converged: true,
                    max_coord_delta: 0.0,
                    seed: 0,
                    skipped_columns: vec![],
                }
            })
            .collect();
        SolutionPath {
            kind: PenaltyKind::Scad,
            a: 3.0,
            lambdas: lambdas.to_vec(),
            estimates,
            warm_start_from: vec![None; lambdas.len()],
            seed: 0,
        }
    }

    #[test]
    fn one_std_error_prefers_sparser_point() {
        let lambdas = [1.0, 0.5, 0.25];
        let path = fixture_path(&lambdas, &[2, 5, 8]);
        let pts = vec![point(1.0, 1.05, 0.1), point(0.5, 1.0, 0.1), point(0.25, 1.2, 0.1)];
        let curve = detect_instability(pts, 1e9, 2).unwrap();
        let sel = one_std_error_select(&[(3.0, &curve, &path)]).unwrap();
        assert_eq!((sel.lambda, sel.support_size), (1.0, 2));
        assert!(sel.cv_error <= sel.threshold);
        assert_eq!((sel.min_lambda, sel.min_a), (0.5, 3.0));

        let single = detect_instability(vec![point(1.0, 1.0, 0.1)], 3.0, 2).unwrap();
        let p1 = fixture_path(&[1.0], &[4]);
        let s1 = one_std_error_select(&[(5.0, &single, &p1)]).unwrap();
        assert_eq!((s1.a, s1.lambda, s1.support_size), (5.0, 1.0, 4));

        // equal K: larger lambda first, then larger a
        let path2 = fixture_path(&lambdas, &[3, 3, 3]);
        let flat = detect_instability(vec![point(1.0, 1.0, 0.1), point(0.5, 1.0, 0.1), point(0.25, 1.0, 0.1)], 3.0, 2).unwrap();
        let s2 = one_std_error_select(&[(3.0, &flat, &path2), (4.0, &flat, &path2)]).unwrap();
        assert_eq!((s2.a, s2.lambda), (4.0, 1.0));
    }

    #[test]
    fn selection_needs_a_stable_point() {
        let mut pts = vec![point(1.0, 1.0, 0.1)];
        pts[0].hessian_ok = false;
        let c = detect_instability(pts, 3.0, 2).unwrap();
        let p = fixture_path(&[1.0], &[1]);
        assert!(matches!(one_std_error_select(&[(3.0, &c, &p)]), Err(Error::NoStablePoints)));
    }

    #[test]
    fn generalization_trivial_cases() {
        let e = EnsembleParams::unit_power(0.5, 0.2, 0.1).unwrap();
        let inst = gen_instance(40, &e, 3).unwrap().problem;
        let x0: Vec<f64> = inst.x0().unwrap().iter().copied().collect();
        let mk = |x: Vec<f64>| Estimate {
            active_set: crate::solver::active_set_of(&x),
            x_hat: x,
            iterations: 0,
            converged: true,
            max_coord_delta: 0.0,
            seed: 0,
            skipped_columns: vec![],
        };
        let g = generalization_gap_check(&inst, &mk(x0.clone()), &e, 1000, 1).unwrap();
        assert_eq!(g.predicted, 0.05);
        let g0 = generalization_gap_check(&inst, &mk(vec![0.0; 40]), &e, 1000, 1).unwrap();
        let sp = x0.iter().map(|v| v * v).sum::<f64>() / 40.0;
        assert!((g0.predicted - (sp / 2.0 / 0.5 + 0.05)).abs() < 1e-12);
    }

    #[test]
    fn path_helpers_line_up() {
        let p = toy(20, 40, 6);
        let g = geometric_grid(2.0, 5, 0.1).unwrap();
        let path = solve_path(&p, 3.0, PenaltyKind::Scad, &g, &CdOptions::default(), 1).unwrap();
        let ap = approx_loo_path(&p, &path).unwrap();
        let li = literal_cv_path(&p, &path, Some(4), &CdOptions::default(), 2).unwrap();
        assert_eq!(ap.len(), 5);
        assert!(li.iter().all(|c| c.method == CvMethod::Kfold && c.all_converged));
        assert!(ap.iter().zip(&g).all(|(c, l)| c.lambda == *l));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn detector_is_a_pure_one_cut(vals in prop::collection::vec((0.0f64..2.0, 0.001f64..0.3, any::<bool>()), 1..30), k in 0.5f64..5.0, w in 1usize..4) {
            let pts: Vec<_> = vals.iter().enumerate().map(|(j, &(v, b, ok))| {
                let mut p = point(10.0 * 0.9f64.powi(j as i32), v, b);
                p.hessian_ok = ok || j % 3 != 0;
                p
            }).collect();
            let c1 = detect_instability(pts.clone(), k, w).unwrap();
            let c2 = detect_instability(pts, k, w).unwrap();
            prop_assert_eq!(&c1, &c2);
            let first_bad = c1.stable_mask.iter().position(|s| !s);
            if let Some(f) = first_bad {
                prop_assert!(c1.stable_mask[f..].iter().all(|s| !s));
                prop_assert_eq!(c1.lambda_c, Some(c1.points[f].lambda));
            } else {
                prop_assert_eq!(c1.lambda_c, None);
            }
        }

        #[test]
        fn selection_stays_within_one_error_bar(vals in prop::collection::vec((0.5f64..1.5, 0.01f64..0.2, 0usize..10), 1..12)) {
            let lambdas: Vec<f64> = (0..vals.len()).map(|j| 0.8f64.powi(j as i32)).collect();
            let path = fixture_path(&lambdas, &vals.iter().map(|v| v.2).collect::<Vec<_>>());
            let pts = vals.iter().zip(&lambdas).map(|(v, &l)| point(l, v.0, v.1)).collect();
            let curve = detect_instability(pts, 1e9, 2).unwrap();
            let sel = one_std_error_select(&[(3.0, &curve, &path)]).unwrap();
            let k = curve.stable_minimum().unwrap();
            prop_assert!(sel.cv_error <= curve.points[k].epsilon_cv + curve.points[k].error_bar);
        }
    }
}
