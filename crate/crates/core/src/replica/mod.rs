//! Replica-symmetric theory of the penalised estimator in the large-system
//! limit: equations of state, AT stability, existence, observables and the
//! phase boundaries in the `(lambda, a)` plane.

mod eos;
mod phase;
mod xi;

pub use eos::{
    at_condition, eos_rhs, observables, sigma_mixture, solve_eos, EosOptions, Observables, OrderParams, RsSolution, RsStatus,
    DEFAULT_DAMPING, DEFAULT_MAX_ITER, DEFAULT_TOL, EXISTENCE_MARGIN,
};
pub use phase::{
    a_floor, phase_boundaries, BoundaryPoint, GlobalMinimum, ImsePoint, PhaseCell, PhaseDiagram, PhaseOptions,
};
pub use xi::{single_site_estimate, xi_closed_form, XiBundle};

use crate::ensemble::EnsembleParams;
use crate::error::Result;
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::solver::check_descending;

/// Solutions along a descending `lambda` grid at fixed `a`.
#[derive(Debug, Clone)]
pub struct LambdaSweep {
    pub kind: PenaltyKind,
    pub a: f64,
    pub lambdas: Vec<f64>,
    pub solutions: Vec<RsSolution>,
    /// First grid index without a converged solution.
    pub first_nonexistent: Option<usize>,
    /// First converged grid index that is AT-unstable.
    pub first_at_crossing: Option<usize>,
}

impl LambdaSweep {
    /// Indices of the AT crossings, counted each time stability flips
    /// between consecutive converged points.
    pub fn at_transitions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut prev: Option<bool> = None;
        for (k, s) in self.solutions.iter().enumerate() {
            if !s.is_converged() {
                continue;
            }
            if let Some(p) = prev {
                if p != s.at_stable {
                    out.push(k);
                }
            }
            prev = Some(s.at_stable);
        }
        out
    }
}

/// Solves the equations of state along a descending grid. With
/// `continuation` each point starts from the previous converged fixed point.
pub fn sweep_lambda(
    ens: &EnsembleParams,
    kind: PenaltyKind,
    a: f64,
    grid: &[f64],
    continuation: bool,
    opts: &EosOptions,
) -> Result<LambdaSweep> {
    check_descending(grid)?;
    let default = OrderParams::default_init(ens);
    let mut init = default;
    let mut solutions = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let spec = PenaltySpec::new(kind, lambda, a)?;
        let s = solve_eos(ens, &spec, &init, opts)?;
        init = if continuation && s.is_converged() { s.params } else { default };
        solutions.push(s);
    }
    let first_nonexistent = solutions.iter().position(|s| !s.is_converged());
    let first_at_crossing = solutions.iter().position(|s| s.is_converged() && !s.at_stable);
    Ok(LambdaSweep { kind, a, lambdas: grid.to_vec(), solutions, first_nonexistent, first_at_crossing })
}

/// Ratio between consecutive amplitudes of the annealing schedule.
const ANNEAL_RATIO: f64 = 0.9;

/// Amplitude above which the all-zero estimator is the fixed point to
/// machine precision (`erfc(8) < 1e-28` for the widest field).
pub fn trivial_lambda(ens: &EnsembleParams) -> f64 {
    let chih = OrderParams::trivial(ens).chih;
    8.0 * std::f64::consts::SQRT_2 * (chih + ens.sigma_x2).sqrt()
}

/// Solves the equations of state at `spec` on the branch connected to the
/// all-zero estimator, annealing `lambda` down from [`trivial_lambda`].
/// Stops at the first amplitude where the branch is lost.
pub fn solve_eos_annealed(ens: &EnsembleParams, spec: &PenaltySpec, opts: &EosOptions) -> Result<RsSolution> {
    spec.validate()?;
    let top = trivial_lambda(ens);
    let mut init = OrderParams::trivial(ens);
    let mut lambda = top;
    while lambda * ANNEAL_RATIO > spec.lambda {
        lambda *= ANNEAL_RATIO;
        let s = solve_eos(ens, &spec.with_lambda(lambda), &init, opts)?;
        if !s.is_converged() {
            return Ok(s);
        }
        init = s.params;
    }
    solve_eos(ens, spec, &init, opts)
}

/// Bisects (geometrically) between `lambda_hi`, where `holds` is true, and
/// `lambda_lo`, where it is false, until the bracket is within `rel_tol`
/// relative. Each trial starts from the last fixed point on the true side.
#[allow(clippy::too_many_arguments)]
pub fn bisect_lambda(
    ens: &EnsembleParams,
    kind: PenaltyKind,
    a: f64,
    mut lambda_hi: f64,
    mut lambda_lo: f64,
    init: &OrderParams,
    opts: &EosOptions,
    rel_tol: f64,
    holds: impl Fn(&RsSolution) -> bool,
) -> Result<f64> {
    let mut warm = *init;
    while (lambda_hi - lambda_lo) > rel_tol * lambda_hi {
        let mid = (lambda_hi * lambda_lo).sqrt();
        let s = solve_eos(ens, &PenaltySpec::new(kind, mid, a)?, &warm, opts)?;
        if holds(&s) {
            lambda_hi = mid;
            warm = s.params;
        } else {
            lambda_lo = mid;
        }
    }
    Ok((lambda_hi * lambda_lo).sqrt())
}

/// `lambda` of the first AT crossing of a sweep, refined by bisection.
pub fn refine_at_crossing(ens: &EnsembleParams, sweep: &LambdaSweep, opts: &EosOptions, rel_tol: f64) -> Result<Option<f64>> {
    let Some(k) = sweep.first_at_crossing else { return Ok(None) };
    if k == 0 || !sweep.solutions[k - 1].is_rs_stable() {
        return Ok(None);
    }
    let l = bisect_lambda(
        ens,
        sweep.kind,
        sweep.a,
        sweep.lambdas[k - 1],
        sweep.lambdas[k],
        &sweep.solutions[k - 1].params,
        opts,
        rel_tol,
        |s| s.is_rs_stable(),
    )?;
    Ok(Some(l))
}

/// `lambda` below which the RS solution of a sweep ceases to exist.
pub fn refine_existence_limit(ens: &EnsembleParams, sweep: &LambdaSweep, opts: &EosOptions, rel_tol: f64) -> Result<Option<f64>> {
    let Some(k) = sweep.first_nonexistent else { return Ok(None) };
    if k == 0 {
        return Ok(None);
    }
    let l = bisect_lambda(
        ens,
        sweep.kind,
        sweep.a,
        sweep.lambdas[k - 1],
        sweep.lambdas[k],
        &sweep.solutions[k - 1].params,
        opts,
        rel_tol,
        |s| s.is_converged(),
    )?;
    Ok(Some(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::geometric_grid;

    fn ens() -> EnsembleParams {
        EnsembleParams::unit_power(0.5, 0.2, 0.1).unwrap()
    }

    #[test]
    fn trivial_grid_is_all_stable() {
        let g = geometric_grid(1e3, 10, 0.1).unwrap();
        let s = sweep_lambda(&ens(), PenaltyKind::Scad, 3.0, &g, true, &EosOptions::default()).unwrap();
        assert!(s.solutions.iter().all(|x| x.is_rs_stable()));
        assert_eq!(s.first_nonexistent, None);
        assert_eq!(s.first_at_crossing, None);
        for x in &s.solutions {
            let o = x.observables.unwrap();
            // erfc of the threshold underflows; zero up to the smallest normals
            assert!(o.rho_hat < 1e-300 && o.tp < 1e-300 && o.fp < 1e-300);
        }
    }

    #[test]
    fn annealed_solve_matches_sweep() {
        let e = ens();
        let opts = EosOptions::default();
        let g = geometric_grid(5.0, 40, 0.01).unwrap();
        let s = sweep_lambda(&e, PenaltyKind::Scad, 3.0, &g, true, &opts).unwrap();
        for k in [5, 12, 14] {
            let a = solve_eos_annealed(&e, &PenaltySpec::scad(g[k], 3.0).unwrap(), &opts).unwrap();
            assert!(a.is_converged());
            let (x, y) = (a.observables.unwrap(), s.solutions[k].observables.unwrap());
            assert!((x.eps_x - y.eps_x).abs() < 1e-8);
        }
        let big = solve_eos_annealed(&e, &PenaltySpec::scad(2.0 * trivial_lambda(&e), 3.0).unwrap(), &opts).unwrap();
        assert!(big.observables.unwrap().rho_hat < 1e-28);
    }

    #[test]
    fn scad_sweep_loses_stability_then_existence() {
        let e = ens();
        let opts = EosOptions::default();
        let g = geometric_grid(5.0, 60, 0.002).unwrap();
        let s = sweep_lambda(&e, PenaltyKind::Scad, 3.0, &g, true, &opts).unwrap();
        let at = s.first_at_crossing.expect("AT crossing");
        let rs = s.first_nonexistent.expect("existence limit");
        assert!(at <= rs, "AT at {at} should precede existence loss at {rs}");
        let l_at = refine_at_crossing(&e, &s, &opts, 1e-4).unwrap().unwrap();
        assert!(l_at < g[at - 1] && l_at > g[at]);
        // the refined bracket straddles the stability flip
        let above = solve_eos(&e, &PenaltySpec::scad(l_at * (1.0 + 2e-4), 3.0).unwrap(), &s.solutions[at - 1].params, &opts).unwrap();
        let below = solve_eos(&e, &PenaltySpec::scad(l_at * (1.0 - 2e-4), 3.0).unwrap(), &above.params, &opts).unwrap();
        assert!(above.is_rs_stable());
        assert!(!below.is_rs_stable());
        let l_rs = refine_existence_limit(&e, &s, &opts, 1e-4).unwrap().unwrap();
        assert!(l_rs <= l_at);
    }
}
