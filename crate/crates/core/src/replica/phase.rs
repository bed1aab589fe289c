//! Phase boundaries in the `(lambda, a)` plane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eos::{solve_eos, EosOptions, OrderParams, RsSolution};
use super::sweep_lambda;
use crate::ensemble::EnsembleParams;
use crate::error::{invalid, Result};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::solver::check_descending;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    pub eos: EosOptions,
    /// Bisection tolerance, relative to the distance from the `a` floor (for
    /// `a`) or to the value itself (for `lambda`).
    pub rel_tol: f64,
    /// Refine the per-`a` minimisers of `eps_x` and `R` between grid points.
    pub refine_minima: bool,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions { eos: EosOptions::default(), rel_tol: 1e-4, refine_minima: true }
    }
}

/// Lowest `a` at which an RS solution can exist: 2 for SCAD, 1 for MCP.
pub fn a_floor(kind: PenaltyKind) -> Result<f64> {
    match kind {
        PenaltyKind::Scad => Ok(2.0),
        PenaltyKind::Mcp => Ok(1.0),
        PenaltyKind::Lasso => Err(invalid("phase boundaries need a nonconvex penalty (scad or mcp)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub lambda: f64,
    pub a: f64,
    pub solution: RsSolution,
}

/// Boundary lines at one `lambda`. `None` when the line does not cross the
/// scanned `a` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub lambda: f64,
    pub a_at: Option<f64>,
    pub a_rs: Option<f64>,
    pub a_imse: Option<f64>,
}

/// Per-`a` minimiser of `eps_x` over `lambda`, and the smallest `R` along
/// the same sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImsePoint {
    pub a: f64,
    pub lambda: f64,
    pub eps_x: f64,
    pub r: f64,
    pub tp: f64,
    pub fp: f64,
    pub at_stable: bool,
    pub lambda_min_r: f64,
    pub min_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalMinimum {
    pub lambda: f64,
    pub a: f64,
    pub eps_x: f64,
    pub at_stable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub kind: PenaltyKind,
    pub ensemble: EnsembleParams,
    pub lambdas: Vec<f64>,
    pub a_values: Vec<f64>,
    /// One row per `a`, each row in grid `lambda` order.
    pub cells: Vec<Vec<PhaseCell>>,
    pub boundaries: Vec<BoundaryPoint>,
    pub imse: Vec<ImsePoint>,
    pub global_min: Option<GlobalMinimum>,
    /// `eps_x` along the a_IMSE line still decreases over the top decade of
    /// the `a` grid: the optimum sits in the LASSO limit.
    pub lasso_limit: bool,
}

impl PhaseDiagram {
    /// `(a, min_lambda R)` for every row with a converged point.
    pub fn min_r_by_a(&self) -> Vec<(f64, f64)> {
        self.imse.iter().map(|p| (p.a, p.min_r)).collect()
    }

    /// The `a` with the smallest `min_lambda R`.
    pub fn roc_optimal_a(&self) -> Option<f64> {
        self.imse.iter().min_by(|x, y| x.min_r.total_cmp(&y.min_r)).map(|p| p.a)
    }
}

/// Traces the AT line, the RS existence limit and the a_IMSE line.
pub fn phase_boundaries(
    ens: &EnsembleParams,
    kind: PenaltyKind,
    lambda_grid: &[f64],
    a_grid: &[f64],
    opts: &PhaseOptions,
) -> Result<PhaseDiagram> {
    ens.validate()?;
    check_descending(lambda_grid)?;
    let floor = a_floor(kind)?;
    if a_grid.is_empty() || a_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("a grid must be non-empty and strictly increasing"));
    }
    if a_grid.iter().any(|&a| PenaltySpec::new(kind, 1.0, a).is_err()) {
        return Err(invalid(format!("a grid contains values invalid for {kind}")));
    }
    if !(opts.rel_tol > 0.0) {
        return Err(invalid("rel_tol must be positive"));
    }

    let rows: Vec<(Vec<PhaseCell>, Option<ImsePoint>)> = a_grid
        .par_iter()
        .map(|&a| -> Result<_> {
            let sweep = sweep_lambda(ens, kind, a, lambda_grid, true, &opts.eos)?;
            let imse = row_minima(ens, kind, a, &sweep.lambdas, &sweep.solutions, opts)?;
            let cells = sweep
                .lambdas
                .iter()
                .zip(&sweep.solutions)
                .map(|(&lambda, &solution)| PhaseCell { lambda, a, solution })
                .collect();
            Ok((cells, imse))
        })
        .collect::<Result<_>>()?;
    let (cells, imse): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let imse: Vec<ImsePoint> = imse.into_iter().flatten().collect();

    let a_top = *a_grid.last().unwrap();
    let boundaries: Vec<BoundaryPoint> = lambda_grid
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| -> Result<_> {
            let top = &cells[cells.len() - 1][k].solution;
            let (a_rs, a_at) = boundary_in_a(ens, kind, lambda, floor, a_top, top, opts)?;
            Ok(BoundaryPoint { lambda, a_at, a_rs, a_imse: interpolate_imse(&imse, lambda) })
        })
        .collect::<Result<_>>()?;

    let global = imse
        .iter()
        .min_by(|x, y| x.eps_x.total_cmp(&y.eps_x))
        .map(|p| GlobalMinimum { lambda: p.lambda, a: p.a, eps_x: p.eps_x, at_stable: p.at_stable });
    let lasso_limit = decreasing_over_top_decade(&imse, a_top);

    Ok(PhaseDiagram {
        kind,
        ensemble: *ens,
        lambdas: lambda_grid.to_vec(),
        a_values: a_grid.to_vec(),
        cells,
        boundaries,
        imse,
        global_min: if lasso_limit { None } else { global },
        lasso_limit,
    })
}

fn decreasing_over_top_decade(imse: &[ImsePoint], a_top: f64) -> bool {
    let top: Vec<&ImsePoint> = imse.iter().filter(|p| p.a >= a_top / 10.0).collect();
    top.len() >= 2 && top.windows(2).all(|w| w[1].eps_x < w[0].eps_x)
}

/// Log-linear interpolation of the a_IMSE line at `lambda`, taking the
/// smallest `a` whose segment brackets it.
fn interpolate_imse(imse: &[ImsePoint], lambda: f64) -> Option<f64> {
    imse.windows(2).find_map(|w| {
        let (l0, l1) = (w[0].lambda.ln(), w[1].lambda.ln());
        let l = lambda.ln();
        let (lo, hi) = if l0 <= l1 { (l0, l1) } else { (l1, l0) };
        if l < lo || l > hi {
            return None;
        }
        if hi == lo {
            return Some(w[0].a);
        }
        let t = (l - l0) / (l1 - l0);
        Some(w[0].a + t * (w[1].a - w[0].a))
    })
}

/// `(a_RS, a_AT)` at fixed `lambda` by bisection on `(floor, a_top]`.
fn boundary_in_a(
    ens: &EnsembleParams,
    kind: PenaltyKind,
    lambda: f64,
    floor: f64,
    a_top: f64,
    top: &RsSolution,
    opts: &PhaseOptions,
) -> Result<(Option<f64>, Option<f64>)> {
    if !top.is_converged() {
        return Ok((None, None));
    }
    let solve = |a: f64, init: &OrderParams| solve_eos(ens, &PenaltySpec::new(kind, lambda, a)?, init, &opts.eos);
    let bisect = |lo: f64, hi: f64, init: OrderParams, holds: &dyn Fn(&RsSolution) -> bool| -> Result<f64> {
        let (mut lo, mut hi, mut warm) = (lo, hi, init);
        while hi - lo > opts.rel_tol * (hi - floor) && hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            let s = solve(mid, &warm)?;
            if holds(&s) {
                hi = mid;
                warm = s.params;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    };
    let a_rs = bisect(floor, a_top, top.params, &|s| s.is_converged())?;
    let a_at = if top.is_rs_stable() {
        let start = solve(a_rs, &top.params)?;
        if start.is_rs_stable() {
            Some(a_rs)
        } else {
            Some(bisect(a_rs, a_top, top.params, &|s| s.is_rs_stable())?)
        }
    } else {
        None
    };
    Ok((Some(a_rs), a_at))
}

/// Minimisers of `eps_x` and `R` along one row.
fn row_minima(
    ens: &EnsembleParams,
    kind: PenaltyKind,
    a: f64,
    lambdas: &[f64],
    sols: &[RsSolution],
    opts: &PhaseOptions,
) -> Result<Option<ImsePoint>> {
    let value = |s: &RsSolution, f: fn(&super::Observables) -> f64| s.observables.as_ref().map(f);
    let argmin = |f: fn(&super::Observables) -> f64| {
        (0..sols.len())
            .filter_map(|k| value(&sols[k], f).map(|v| (k, v)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
    };
    let eps = |o: &super::Observables| o.eps_x;
    let rr = |o: &super::Observables| o.r;
    let Some((ke, _)) = argmin(eps) else { return Ok(None) };
    let (kr, _) = argmin(rr).unwrap();
    let (le, se) = refine_min(ens, kind, a, lambdas, sols, ke, eps, opts)?;
    let (lr, sr) = refine_min(ens, kind, a, lambdas, sols, kr, rr, opts)?;
    let oe = se.observables.unwrap();
    Ok(Some(ImsePoint {
        a,
        lambda: le,
        eps_x: oe.eps_x,
        r: oe.r,
        tp: oe.tp,
        fp: oe.fp,
        at_stable: se.at_stable,
        lambda_min_r: lr,
        min_r: sr.observables.unwrap().r,
    }))
}

/// Golden-section search in `log lambda` between the grid neighbours of `k`.
#[allow(clippy::too_many_arguments)]
fn refine_min(
    ens: &EnsembleParams,
    kind: PenaltyKind,
    a: f64,
    lambdas: &[f64],
    sols: &[RsSolution],
    k: usize,
    f: fn(&super::Observables) -> f64,
    opts: &PhaseOptions,
) -> Result<(f64, RsSolution)> {
    let best = (lambdas[k], sols[k]);
    if !opts.refine_minima || lambdas.len() < 3 {
        return Ok(best);
    }
    let hi = lambdas[k.saturating_sub(1)].ln();
    let lo = lambdas[(k + 1).min(lambdas.len() - 1)].ln();
    let warm = sols[k].params;
    let eval = |t: f64| -> Result<(f64, RsSolution)> {
        let s = solve_eos(ens, &PenaltySpec::new(kind, t.exp(), a)?, &warm, &opts.eos)?;
        Ok((s.observables.as_ref().map(f).unwrap_or(f64::INFINITY), s))
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x0, mut x3) = (lo, hi);
    let mut x1 = x3 - g * (x3 - x0);
    let mut x2 = x0 + g * (x3 - x0);
    let (mut f1, mut s1) = eval(x1)?;
    let (mut f2, mut s2) = eval(x2)?;
    while x3 - x0 > opts.rel_tol {
        if f1 <= f2 {
            x3 = x2;
            (x2, f2, s2) = (x1, f1, s1);
            x1 = x3 - g * (x3 - x0);
            (f1, s1) = eval(x1)?;
        } else {
            x0 = x1;
            (x1, f1, s1) = (x2, f2, s2);
            x2 = x0 + g * (x3 - x0);
            (f2, s2) = eval(x2)?;
        }
    }
    let best_v = best.1.observables.as_ref().map(f).unwrap();
    let (t, fv, s) = if f1 <= f2 { (x1, f1, s1) } else { (x2, f2, s2) };
    Ok(if fv < best_v { (t.exp(), s) } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::geometric_grid;

    #[test]
    fn lasso_is_rejected() {
        let e = EnsembleParams::unit_power(0.5, 0.2, 0.1).unwrap();
        assert!(phase_boundaries(&e, PenaltyKind::Lasso, &[1.0, 0.5], &[3.0], &PhaseOptions::default()).is_err());
    }

    #[test]
    fn coarse_scad_diagram() {
        let e = EnsembleParams::unit_power(0.5, 0.2, 0.1).unwrap();
        let lambdas = geometric_grid(3.0, 8, 0.05).unwrap();
        let a_grid = [1.5, 2.5, 4.0, 8.0, 20.0];
        let d = phase_boundaries(&e, PenaltyKind::Scad, &lambdas, &a_grid, &PhaseOptions::default()).unwrap();
        assert!(d.cells[0].iter().all(|c| !c.solution.is_converged()));
        for b in &d.boundaries {
            if let (Some(rs), Some(at)) = (b.a_rs, b.a_at) {
                assert!(rs >= 2.0 && at >= rs, "{b:?}");
            }
        }
        assert_eq!(d.imse.len(), 4);
        for p in &d.imse {
            let row = d.a_values.iter().position(|&a| a == p.a).unwrap();
            let grid_min = d.cells[row].iter().filter_map(|c| c.solution.observables.map(|o| o.eps_x)).fold(f64::INFINITY, f64::min);
            assert!(p.eps_x <= grid_min);
        }
    }
}
