//! Randomised coordinate descent and warm-started lambda paths.
//!
//! Each coordinate update solves the one-dimensional subproblem
//! `min_t (c_i/2) t^2 - h_i t + J(t)` exactly, with `c_i = |a_i|^2` and
//! `h_i = a_i^T (y - A x + a_i x_i)`, which is the scalar proximal problem at
//! `w = h_i / c_i`, `sigma_w2 = 1 / c_i`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::problem::{axpy, dot, RegressionProblem};
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_DELTA: f64 = 1e-10;
pub const DEFAULT_MAX_SWEEPS: usize = 100_000;
pub const DEFAULT_GRID_LEN: usize = 100;
pub const DEFAULT_GRID_RATIO: f64 = 0.01;

/// Stopping rule of coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdOptions {
    /// Stop once every component moved by less than this in a full sweep.
    pub delta: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions { delta: DEFAULT_DELTA, max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

impl CdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps must be at least 1"));
        }
        Ok(())
    }
}

/// Fitted coefficients at one regularisation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub x_hat: Vec<f64>,
    /// Sorted indices of the nonzero coefficients.
    pub active_set: Vec<usize>,
    /// Number of completed sweeps.
    pub iterations: usize,
    pub converged: bool,
    /// Largest component change in the final sweep.
    pub max_coord_delta: f64,
    /// Seed of the coordinate-order stream.
    pub seed: u64,
    /// Columns with zero norm, pinned at zero.
    pub skipped_columns: Vec<usize>,
}

impl Estimate {
    /// `||x_hat||_0`.
    pub fn support_size(&self) -> usize {
        self.active_set.len()
    }

    fn from_coefficients(x_hat: Vec<f64>, iterations: usize, converged: bool, max_coord_delta: f64, seed: u64, skipped: Vec<usize>) -> Self {
        let active_set = active_set_of(&x_hat);
        Estimate { x_hat, active_set, iterations, converged, max_coord_delta, seed, skipped_columns: skipped }
    }
}

pub fn active_set_of(x: &[f64]) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

/// Coefficients together with the cached residual `y - A x`.
#[derive(Debug, Clone)]
pub struct CdState {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
}

impl CdState {
    pub fn new(problem: &RegressionProblem, x: Vec<f64>) -> Result<Self> {
        if x.len() != problem.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "initial vector has length {} but problem has {} columns",
                x.len(),
                problem.n_cols()
            )));
        }
        let residual = problem.residual(&x).as_slice().to_vec();
        Ok(CdState { x, residual })
    }

    /// Recompute the residual from scratch.
    pub fn refresh(&mut self, problem: &RegressionProblem) {
        self.residual.copy_from_slice(problem.residual(&self.x).as_slice());
    }
}

/// Outcome of a single coordinate update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordUpdate {
    pub value: f64,
    /// The column had zero norm and the coefficient was pinned at zero.
    pub skipped: bool,
}

/// Replace `x_i` by the global minimiser of its coordinate subproblem and
/// update the residual in place.
#[inline]
pub fn cd_update_coordinate(problem: &RegressionProblem, state: &mut CdState, i: usize, spec: &PenaltySpec) -> CoordUpdate {
    let c = problem.column_sq_norms()[i];
    let col = problem.column(i);
    let old = state.x[i];
    if !(c > 0.0) {
        if old != 0.0 {
            axpy(old, col, &mut state.residual);
            state.x[i] = 0.0;
        }
        return CoordUpdate { value: 0.0, skipped: true };
    }
    let h = dot(col, &state.residual) + c * old;
    let new = spec.prox(h / c, 1.0 / c);
    if new != old {
        axpy(old - new, col, &mut state.residual);
        state.x[i] = new;
    }
    CoordUpdate { value: new, skipped: false }
}

/// Largest `|prox(h_i / c_i, 1 / c_i) - x_i|` at the current point, without
/// moving it.
pub fn stationarity_gap(problem: &RegressionProblem, state: &CdState, spec: &PenaltySpec) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..problem.n_cols() {
        let c = problem.column_sq_norms()[i];
        if !(c > 0.0) {
            continue;
        }
        let h = dot(problem.column(i), &state.residual) + c * state.x[i];
        gap = gap.max((spec.prox(h / c, 1.0 / c) - state.x[i]).abs());
    }
    gap
}

/// `(1/2)|y - A x|^2 + sum_i J(x_i)`.
pub fn objective(problem: &RegressionProblem, x: &[f64], spec: &PenaltySpec) -> f64 {
    let r = problem.residual(x);
    0.5 * r.norm_squared() + x.iter().map(|&v| spec.value(v)).sum::<f64>()
}

/// Randomised coordinate descent from `x_init`.
///
/// Every sweep visits all coordinates in a fresh uniform permutation; the run
/// stops after the first sweep whose largest component change is below
/// `opts.delta`, provided no coordinate would then move by `opts.delta` or
/// more. Hitting `max_sweeps` is reported through `converged`, not as
/// an error.
pub fn coordinate_descent(problem: &RegressionProblem, spec: &PenaltySpec, x_init: &[f64], opts: &CdOptions, rng_seed: u64) -> Result<Estimate> {
    spec.validate()?;
    opts.validate()?;
    let mut state = CdState::new(problem, x_init.to_vec())?;
    Ok(run_cd(problem, spec, &mut state, opts, rng_seed))
}

pub(crate) fn run_cd(problem: &RegressionProblem, spec: &PenaltySpec, state: &mut CdState, opts: &CdOptions, rng_seed: u64) -> Estimate {
    let n = problem.n_cols();
    let mut rng = rng_from_seed(rng_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let skipped: Vec<usize> = (0..n).filter(|&i| !(problem.column_sq_norms()[i] > 0.0)).collect();
    let mut converged = false;
    let mut sweeps = 0;
    let mut max_delta = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        order.shuffle(&mut rng);
        max_delta = 0.0;
        for &i in &order {
            let old = state.x[i];
            let upd = cd_update_coordinate(problem, state, i, spec);
            let d = (upd.value - old).abs();
            if d > max_delta {
                max_delta = d;
            }
        }
        sweeps += 1;
        if max_delta < opts.delta {
            state.refresh(problem);
            if stationarity_gap(problem, state, spec) < opts.delta {
                converged = true;
                break;
            }
        }
        if sweeps % 1000 == 0 {
            state.refresh(problem);
        }
    }
    Estimate::from_coefficients(state.x.clone(), sweeps, converged, max_delta, rng_seed, skipped)
}

/// Descending geometric grid: `lambda_1 = ceil(max_j |a_j^T y|)`,
/// `lambda_L = eps_ratio * lambda_1`.
pub fn lambda_grid(problem: &RegressionProblem, len: usize, eps_ratio: f64) -> Result<Vec<f64>> {
    let top = max_abs_correlation(problem);
    if !(top > 0.0) {
        return Err(invalid("max_j |a_j^T y| is zero; the lambda grid is undefined"));
    }
    geometric_grid(top.ceil(), len, eps_ratio)
}

/// `max_j |a_j^T y|`, the smallest amplitude with only the zero solution.
pub fn max_abs_correlation(problem: &RegressionProblem) -> f64 {
    let y = problem.y().as_slice();
    (0..problem.n_cols()).map(|j| dot(problem.column(j), y).abs()).fold(0.0, f64::max)
}

/// `len` values from `top` down to `eps_ratio * top` with a constant ratio.
pub fn geometric_grid(top: f64, len: usize, eps_ratio: f64) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(invalid(format!("grid length must be >= 2, got {len}")));
    }
    if !(eps_ratio > 0.0 && eps_ratio < 1.0) {
        return Err(invalid(format!("eps_ratio must lie in (0, 1), got {eps_ratio}")));
    }
    if !(top > 0.0) || !top.is_finite() {
        return Err(invalid(format!("top of the grid must be positive, got {top}")));
    }
    let mut grid: Vec<f64> = (0..len).map(|k| top * eps_ratio.powf(k as f64 / (len - 1) as f64)).collect();
    grid[0] = top;
    grid[len - 1] = top * eps_ratio;
    Ok(grid)
}

pub(crate) fn check_descending(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("lambda grid is empty"));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(invalid("lambda grid values must be finite and >= 0"));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("lambda grid must be strictly decreasing"));
    }
    Ok(())
}

/// Estimates along a descending lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub kind: PenaltyKind,
    pub a: f64,
    pub lambdas: Vec<f64>,
    pub estimates: Vec<Estimate>,
    /// Index of the estimate each point was initialised from; `None` means
    /// the zero vector.
    pub warm_start_from: Vec<Option<usize>>,
    pub seed: u64,
}

impl SolutionPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn spec_at(&self, k: usize) -> PenaltySpec {
        PenaltySpec { kind: self.kind, lambda: self.lambdas[k], a: self.a }
    }

    pub fn all_converged(&self) -> bool {
        self.estimates.iter().all(|e| e.converged)
    }
}

/// Lambda annealing: the first point starts from zero, every later point
/// from the previous solution.
pub fn solve_path(problem: &RegressionProblem, a: f64, kind: PenaltyKind, grid: &[f64], opts: &CdOptions, seed: u64) -> Result<SolutionPath> {
    check_descending(grid)?;
    opts.validate()?;
    let base = PenaltySpec::new(kind, grid[0], a)?;
    let mut state = CdState::new(problem, vec![0.0; problem.n_cols()])?;
    let mut estimates = Vec::with_capacity(grid.len());
    let mut lineage = Vec::with_capacity(grid.len());
    for (k, &lambda) in grid.iter().enumerate() {
        let spec = base.with_lambda(lambda);
        state.refresh(problem);
        let est = run_cd(problem, &spec, &mut state, opts, derive_seed(seed, k as u64));
        if !est.converged {
            log::debug!("lambda={lambda}: no convergence after {} sweeps (delta {:e})", est.iterations, est.max_coord_delta);
        }
        estimates.push(est);
        lineage.push(if k == 0 { None } else { Some(k - 1) });
    }
    Ok(SolutionPath { kind, a, lambdas: grid.to_vec(), estimates, warm_start_from: lineage, seed })
}

/// `(1/2M) |y - A x_hat|^2`.
pub fn output_mse(problem: &RegressionProblem, estimate: &Estimate) -> f64 {
    problem.residual(&estimate.x_hat).norm_squared() / (2.0 * problem.n_rows() as f64)
}

/// `(1/2N) |x_hat - x0|^2`.
pub fn input_mse(estimate: &Estimate, x0: &[f64]) -> Result<f64> {
    if x0.len() != estimate.x_hat.len() {
        return Err(Error::DimensionMismatch(format!("x0 has length {} but estimate has {}", x0.len(), estimate.x_hat.len())));
    }
    let s: f64 = estimate.x_hat.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / (2.0 * x0.len() as f64))
}

/// [`input_mse`] against the problem's own ground truth.
pub fn input_mse_for(problem: &RegressionProblem, estimate: &Estimate) -> Result<f64> {
    let x0 = problem.x0().ok_or(Error::MissingGroundTruth)?;
    input_mse(estimate, x0.as_slice())
}
