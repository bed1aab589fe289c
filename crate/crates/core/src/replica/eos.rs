//! Replica-symmetric equations of state and their damped fixed-point solver.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::xi::{site_averages, transition_params, SiteAverages};
use crate::datagen::roc_r;
use crate::ensemble::EnsembleParams;
use crate::error::{invalid, Result};
use crate::penalty::PenaltySpec;

pub const DEFAULT_DAMPING: f64 = 0.5;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Smallest admissible gap `Qh - c` before the iteration is declared outside
/// the RS domain.
pub const EXISTENCE_MARGIN: f64 = 1e-12;
/// Damping below which a step that keeps leaving the domain is abandoned.
const MIN_STEP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RsStatus {
    Converged,
    NonExistent,
    MaxIter,
}

impl fmt::Display for RsStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RsStatus::Converged => "CONVERGED",
            RsStatus::NonExistent => "NON_EXISTENT",
            RsStatus::MaxIter => "MAX_ITER",
        })
    }
}

/// Order parameters and their conjugates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParams {
    pub chi: f64,
    pub q: f64,
    pub m: f64,
    pub qh: f64,
    pub chih: f64,
    pub mh: f64,
}

impl OrderParams {
    /// Fills in the conjugates implied by `(chi, q, m)`.
    pub fn from_primary(chi: f64, q: f64, m: f64, ens: &EnsembleParams) -> Self {
        let g = 1.0 / (1.0 + chi / ens.alpha);
        let chih = (q - 2.0 * m + ens.signal_power() + ens.alpha * ens.sigma_d2) * g * g / ens.alpha;
        OrderParams { chi, q, m, qh: g, chih, mh: g }
    }

    /// Starting point `chi = 0, Q = rho0 sigma_x2, m = Q/2`.
    ///
    /// Starting at `chi = 0` keeps `Qh = 1`, the largest admissible value, so
    /// the first iterate is always inside the domain of the equations.
    pub fn default_init(ens: &EnsembleParams) -> Self {
        let p = ens.signal_power();
        Self::from_primary(0.0, p, 0.5 * p, ens)
    }

    /// The all-zero estimator's fixed point.
    pub fn trivial(ens: &EnsembleParams) -> Self {
        Self::from_primary(0.0, 0.0, 0.0, ens)
    }

    fn primary(&self) -> [f64; 3] {
        [self.chi, self.q, self.m]
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        let (a, b) = (self.primary(), other.primary());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Two-atom distribution of the effective field width: `sigma_minus` with
/// weight `1 - rho0`, `sigma_plus` with weight `rho0`.
pub fn sigma_mixture(ens: &EnsembleParams, chih: f64, mh: f64) -> (f64, f64, f64) {
    let chih = chih.max(0.0);
    (chih.sqrt(), (chih + mh * mh * ens.sigma_x2).sqrt(), ens.rho0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub eps_x: f64,
    pub eps_y: f64,
    pub tp: f64,
    pub fp: f64,
    pub r: f64,
    pub rho_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsSolution {
    pub params: OrderParams,
    pub observables: Option<Observables>,
    pub status: RsStatus,
    pub at_lhs: Option<f64>,
    pub at_stable: bool,
    pub iterations: usize,
}

impl RsSolution {
    pub fn is_converged(&self) -> bool {
        self.status == RsStatus::Converged
    }

    /// Converged and AT-stable.
    pub fn is_rs_stable(&self) -> bool {
        self.is_converged() && self.at_stable
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EosOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EosOptions {
    fn default() -> Self {
        EosOptions { damping: DEFAULT_DAMPING, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

impl EosOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Averages over the two field widths.
struct Mixed {
    plus: SiteAverages,
    minus: SiteAverages,
    rho0: f64,
}

impl Mixed {
    fn eval(params: &OrderParams, ens: &EnsembleParams, spec: &PenaltySpec) -> Self {
        let (sm, sp, rho0) = sigma_mixture(ens, params.chih, params.mh);
        Mixed { plus: site_averages(sp, params.qh, spec), minus: site_averages(sm, params.qh, spec), rho0 }
    }

    fn avg(&self, f: impl Fn(&SiteAverages) -> f64) -> f64 {
        (1.0 - self.rho0) * f(&self.minus) + self.rho0 * f(&self.plus)
    }
}

fn in_domain(params: &OrderParams, spec: &PenaltySpec) -> bool {
    let (c, _) = transition_params(spec);
    params.qh.is_finite() && params.chih.is_finite() && params.qh - c >= EXISTENCE_MARGIN
}

/// Right-hand sides of the equations of state. `None` when `params` lies
/// outside the domain where the RS equations are defined.
pub fn eos_rhs(params: &OrderParams, ens: &EnsembleParams, spec: &PenaltySpec) -> Option<OrderParams> {
    if !in_domain(params, spec) {
        return None;
    }
    let mx = Mixed::eval(params, ens, spec);
    let chi = mx.avg(|s| s.slope);
    let q = mx.avg(|s| s.square);
    let m = ens.signal_power() * params.mh * mx.plus.slope;
    let out = OrderParams::from_primary(chi, q, m, ens);
    out.primary().iter().all(|v| v.is_finite()).then_some(out)
}

/// Left-hand side of the AT inequality; the RS solution is locally stable
/// when it is below one.
pub fn at_condition(params: &OrderParams, ens: &EnsembleParams, spec: &PenaltySpec) -> (f64, bool) {
    let mx = Mixed::eval(params, ens, spec);
    let g = 1.0 + params.chi / ens.alpha;
    let lhs = mx.avg(|s| s.slope_sq) / (ens.alpha * g * g);
    (lhs, lhs < 1.0)
}

pub fn observables(params: &OrderParams, ens: &EnsembleParams, spec: &PenaltySpec) -> Observables {
    let mx = Mixed::eval(params, ens, spec);
    let tp = mx.plus.nonzero;
    let fp = mx.minus.nonzero;
    Observables {
        eps_x: 0.5 * (ens.signal_power() - 2.0 * params.m + params.q),
        eps_y: 0.5 * params.chih,
        tp,
        fp,
        r: roc_r(tp, fp),
        rho_hat: mx.avg(|s| s.nonzero),
    }
}

/// Damped fixed-point iteration of the equations of state.
///
/// Converges when the fixed-point residual `max |rhs - current|` over
/// `(chi, Q, m)` drops below `tol`. A step that would take `Qh` below the
/// concavity of the penalty is halved until it stays inside; when no step
/// does, the solution does not exist.
pub fn solve_eos(ens: &EnsembleParams, spec: &PenaltySpec, init: &OrderParams, opts: &EosOptions) -> Result<RsSolution> {
    ens.validate()?;
    spec.validate()?;
    opts.validate()?;
    let mut cur = OrderParams::from_primary(init.chi, init.q, init.m, ens);
    let failed = |params: OrderParams, status, iterations| RsSolution {
        params,
        observables: None,
        status,
        at_lhs: None,
        at_stable: false,
        iterations,
    };
    let mut step = opts.damping;
    for it in 1..=opts.max_iter {
        let Some(rhs) = eos_rhs(&cur, ens, spec) else {
            return Ok(failed(cur, RsStatus::NonExistent, it));
        };
        let residual = rhs.max_abs_diff(&cur);
        if !residual.is_finite() {
            return Ok(failed(cur, RsStatus::NonExistent, it));
        }
        if residual < opts.tol {
            let (lhs, stable) = at_condition(&cur, ens, spec);
            return Ok(RsSolution {
                params: cur,
                observables: Some(observables(&cur, ens, spec)),
                status: RsStatus::Converged,
                at_lhs: Some(lhs),
                at_stable: stable,
                iterations: it,
            });
        }
        // Shorten the step while the trial point leaves the RS domain.
        loop {
            let next = OrderParams::from_primary(
                cur.chi + step * (rhs.chi - cur.chi),
                cur.q + step * (rhs.q - cur.q),
                cur.m + step * (rhs.m - cur.m),
                ens,
            );
            if in_domain(&next, spec) {
                cur = next;
                step = (2.0 * step).min(opts.damping);
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                return Ok(failed(cur, RsStatus::NonExistent, it));
            }
        }
    }
    Ok(failed(cur, RsStatus::MaxIter, opts.max_iter))
}
