//! Separable sparsity penalties and their exact scalar proximal maps.
//!
//! Three penalties are supported, all parameterised by an amplitude `lambda`
//! and (for the nonconvex ones) a switching parameter `a`:
//!
//! ```text
//! LASSO  J(t) = lambda |t|
//! SCAD   J(t) = lambda |t|                                  |t| <= lambda
//!             = -(t^2 - 2 a lambda |t| + lambda^2)/(2(a-1)) lambda < |t| <= a lambda
//!             = (a+1) lambda^2 / 2                          |t| > a lambda
//! MCP    J(t) = lambda |t| - t^2/(2a)                       |t| <= a lambda
//!             = a lambda^2 / 2                              |t| > a lambda
//! ```
//!
//! The scalar problem `min_t (t - w)^2/(2 s2) + J(t)` is the building block of
//! coordinate descent and of the effective single-site problem in the
//! replica analysis.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Lasso,
    Scad,
    Mcp,
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::Lasso => "lasso",
            PenaltyKind::Scad => "scad",
            PenaltyKind::Mcp => "mcp",
        })
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" | "l1" => Ok(PenaltyKind::Lasso),
            "scad" => Ok(PenaltyKind::Scad),
            "mcp" => Ok(PenaltyKind::Mcp),
            other => Err(invalid(format!("unknown penalty kind '{other}'"))),
        }
    }
}

/// Penalty kind plus its regularisation parameters `(lambda, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    /// Switching parameter. Ignored by LASSO.
    pub a: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64, a: f64) -> Result<Self> {
        let spec = PenaltySpec { kind, lambda, a };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Lasso, lambda, f64::INFINITY)
    }

    pub fn scad(lambda: f64, a: f64) -> Result<Self> {
        Self::new(PenaltyKind::Scad, lambda, a)
    }

    pub fn mcp(lambda: f64, a: f64) -> Result<Self> {
        Self::new(PenaltyKind::Mcp, lambda, a)
    }

    /// Same kind and switching parameter at a different amplitude.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltySpec { lambda, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        match self.kind {
            PenaltyKind::Lasso => Ok(()),
            PenaltyKind::Scad if self.a > 1.0 => Ok(()),
            PenaltyKind::Mcp if self.a > 0.0 => Ok(()),
            PenaltyKind::Scad => Err(invalid(format!("SCAD requires a > 1, got {}", self.a))),
            PenaltyKind::Mcp => Err(invalid(format!("MCP requires a > 0, got {}", self.a))),
        }
    }

    /// Magnitude of the most negative curvature of the penalty:
    /// `1/(a-1)` for SCAD, `1/a` for MCP, `0` for LASSO.
    pub fn concavity(&self) -> f64 {
        match self.kind {
            PenaltyKind::Lasso => 0.0,
            PenaltyKind::Scad => 1.0 / (self.a - 1.0),
            PenaltyKind::Mcp => 1.0 / self.a,
        }
    }

    /// `J(theta)` without validation.
    #[inline]
    pub fn value(&self, theta: f64) -> f64 {
        let t = theta.abs();
        let l = self.lambda;
        match self.kind {
            PenaltyKind::Lasso => l * t,
            PenaltyKind::Scad => {
                let a = self.a;
                if t <= l {
                    l * t
                } else if t <= a * l {
                    -(t * t - 2.0 * a * l * t + l * l) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * l * l / 2.0
                }
            }
            PenaltyKind::Mcp => {
                let a = self.a;
                if t <= a * l {
                    l * t - t * t / (2.0 * a)
                } else {
                    a * l * l / 2.0
                }
            }
        }
    }

    /// Second derivative of `J`. At a branch boundary the value of the open
    /// interval just below the boundary (in `|theta|`) is returned.
    #[inline]
    pub fn curvature(&self, theta: f64) -> f64 {
        let t = theta.abs();
        let l = self.lambda;
        match self.kind {
            PenaltyKind::Lasso => 0.0,
            PenaltyKind::Scad => {
                if t > l && t <= self.a * l {
                    1.0 / (1.0 - self.a)
                } else {
                    0.0
                }
            }
            PenaltyKind::Mcp => {
                if t > 0.0 && t <= self.a * l {
                    -1.0 / self.a
                } else {
                    0.0
                }
            }
        }
    }

    /// The scalar one-dimensional objective `(theta - w)^2/(2 s2) + J(theta)`.
    #[inline]
    pub fn scalar_objective(&self, theta: f64, w: f64, sigma_w2: f64) -> f64 {
        let d = theta - w;
        d * d / (2.0 * sigma_w2) + self.value(theta)
    }

    /// Global minimiser of the scalar objective, without argument checks.
    ///
    /// Uses the piecewise closed form whenever the scalar problem is convex
    /// (`1/s2 > concavity`) and falls back to enumerating stationary and
    /// boundary candidates otherwise.
    #[inline]
    pub fn prox(&self, w: f64, sigma_w2: f64) -> f64 {
        let aw = w.abs();
        let t = if 1.0 / sigma_w2 > self.concavity() {
            self.prox_closed_form_abs(aw, sigma_w2)
        } else {
            self.prox_enumerated_abs(aw, sigma_w2)
        };
        if w < 0.0 {
            -t
        } else {
            t
        }
    }

    /// Closed-form minimiser for `w >= 0` in the convex regime.
    fn prox_closed_form_abs(&self, aw: f64, s2: f64) -> f64 {
        let s = 1.0 / s2;
        let l = self.lambda;
        let x = aw * s;
        if x <= l {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Lasso => aw - s2 * l,
            PenaltyKind::Scad => {
                let a = self.a;
                let c = 1.0 / (a - 1.0);
                if x <= l * (1.0 + s) {
                    aw - s2 * l
                } else if x <= a * l * s {
                    (x - a * l * c) / (s - c)
                } else {
                    aw
                }
            }
            PenaltyKind::Mcp => {
                let a = self.a;
                if x <= a * l * s {
                    (x - l) / (s - 1.0 / a)
                } else {
                    aw
                }
            }
        }
    }

    fn prox_enumerated_abs(&self, aw: f64, s2: f64) -> f64 {
        let mut best: f64 = 0.0;
        let mut best_obj = self.scalar_objective(0.0, aw, s2);
        for t in candidates_for(self, aw, s2) {
            if t < 0.0 {
                continue;
            }
            let obj = self.scalar_objective(t, aw, s2);
            if obj < best_obj || (obj == best_obj && t.abs() < best.abs()) {
                best = t;
                best_obj = obj;
            }
        }
        best
    }

    fn branch_of(&self, theta: f64) -> ProxBranch {
        let t = theta.abs();
        let l = self.lambda;
        if t == 0.0 {
            return ProxBranch::Zero;
        }
        match self.kind {
            PenaltyKind::Lasso => ProxBranch::Soft,
            PenaltyKind::Scad => {
                if t <= l {
                    ProxBranch::Soft
                } else if t <= self.a * l {
                    ProxBranch::Transition
                } else {
                    ProxBranch::Ols
                }
            }
            PenaltyKind::Mcp => {
                if t <= self.a * l {
                    ProxBranch::Transition
                } else {
                    ProxBranch::Ols
                }
            }
        }
    }
}

/// Analytic piece of the penalty the scalar minimiser falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProxBranch {
    Zero,
    Soft,
    Transition,
    Ols,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProxResult {
    pub theta_hat: f64,
    pub branch: ProxBranch,
    /// Scalar objective evaluated at `theta_hat`.
    pub objective: f64,
}

/// `J(theta; spec)`.
pub fn penalty_value(theta: f64, spec: &PenaltySpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.value(theta))
}

/// Second derivative of the penalty (left-limit convention at boundaries).
pub fn penalty_curvature(theta: f64, spec: &PenaltySpec) -> f64 {
    spec.curvature(theta)
}

/// Global minimiser of `(theta - w)^2/(2 sigma_w2) + J(theta; spec)`.
pub fn scalar_prox(w: f64, sigma_w2: f64, spec: &PenaltySpec) -> Result<ScalarProxResult> {
    spec.validate()?;
    if !(sigma_w2 > 0.0) || !sigma_w2.is_finite() {
        return Err(invalid(format!("sigma_w2 must be positive and finite, got {sigma_w2}")));
    }
    if !w.is_finite() {
        return Err(invalid(format!("w must be finite, got {w}")));
    }
    let theta_hat = spec.prox(w, sigma_w2);
    Ok(ScalarProxResult {
        theta_hat,
        branch: spec.branch_of(theta_hat),
        objective: spec.scalar_objective(theta_hat, w, sigma_w2),
    })
}

fn candidates_for(spec: &PenaltySpec, w: f64, s2: f64) -> Vec<f64> {
    let s = 1.0 / s2;
    let l = spec.lambda;
    let mut out = vec![0.0];
    for sg in [1.0_f64, -1.0] {
        // soft piece (LASSO everywhere, SCAD below lambda)
        let soft = w - sg * s2 * l;
        let soft_upper = match spec.kind {
            PenaltyKind::Lasso => f64::INFINITY,
            PenaltyKind::Scad => l,
            PenaltyKind::Mcp => 0.0,
        };
        if sg * soft > 0.0 && sg * soft <= soft_upper {
            out.push(soft);
        }
        match spec.kind {
            PenaltyKind::Lasso => {}
            PenaltyKind::Scad => {
                let a = spec.a;
                let c = 1.0 / (a - 1.0);
                out.push(sg * l);
                out.push(sg * a * l);
                if s - c != 0.0 {
                    let t = (w * s - sg * a * l * c) / (s - c);
                    if sg * t > l && sg * t <= a * l {
                        out.push(t);
                    }
                }
                if sg * w > a * l {
                    out.push(w);
                }
            }
            PenaltyKind::Mcp => {
                let a = spec.a;
                let c = 1.0 / a;
                out.push(sg * a * l);
                if s - c != 0.0 {
                    let t = (w * s - sg * l) / (s - c);
                    if sg * t > 0.0 && sg * t <= a * l {
                        out.push(t);
                    }
                }
                if sg * w > a * l {
                    out.push(w);
                }
            }
        }
    }
    out
}

/// Zero, the branch boundary points, and every interior stationary point of
/// each analytic branch of the scalar objective.
pub fn candidate_stationary_points(w: f64, sigma_w2: f64, spec: &PenaltySpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(sigma_w2 > 0.0) {
        return Err(invalid(format!("sigma_w2 must be positive, got {sigma_w2}")));
    }
    Ok(candidates_for(spec, w, sigma_w2))
}

/// Argmin of the scalar objective over [`candidate_stationary_points`]; ties
/// go to the candidate of smaller magnitude.
pub fn argmin_over_candidates(w: f64, sigma_w2: f64, spec: &PenaltySpec) -> Result<f64> {
    let cands = candidate_stationary_points(w, sigma_w2, spec)?;
    let mut best: f64 = 0.0;
    let mut best_obj = f64::INFINITY;
    for t in cands {
        let obj = spec.scalar_objective(t, w, sigma_w2);
        if obj < best_obj || (obj == best_obj && t.abs() < best.abs()) {
            best = t;
            best_obj = obj;
        }
    }
    Ok(best)
}

/// Brute-force minimiser of the scalar objective: a uniform grid over
/// `[-grid_halfwidth, grid_halfwidth]` followed by golden-section refinement
/// of every grid-local minimum. Test oracle only; cost is linear in
/// `grid_halfwidth / step`.
pub fn scalar_prox_oracle(w: f64, sigma_w2: f64, spec: &PenaltySpec, grid_halfwidth: f64, step: f64) -> f64 {
    assert!(step > 0.0, "oracle step must be positive");
    let f = |t: f64| spec.scalar_objective(t, w, sigma_w2);
    let n = (grid_halfwidth / step).ceil() as i64;
    let mut best: f64 = 0.0;
    let mut best_obj = f(0.0);
    let consider = |t: f64, obj: f64, best: &mut f64, best_obj: &mut f64| {
        if obj < *best_obj || (obj == *best_obj && t.abs() < best.abs()) {
            *best = t;
            *best_obj = obj;
        }
    };

    let mut prev2 = f(-(n as f64) * step);
    let mut prev1 = f(-((n - 1) as f64) * step);
    if prev2 <= prev1 {
        let t = -(n as f64) * step;
        let (rt, ro) = golden_section(&f, t - step, t + step);
        consider(rt, ro, &mut best, &mut best_obj);
    }
    for k in (-n + 2)..=n {
        let t = k as f64 * step;
        let cur = f(t);
        if prev1 <= prev2 && prev1 <= cur {
            let tc = (k - 1) as f64 * step;
            consider(tc, prev1, &mut best, &mut best_obj);
            let (rt, ro) = golden_section(&f, tc - step, tc + step);
            consider(rt, ro, &mut best, &mut best_obj);
        }
        prev2 = prev1;
        prev1 = cur;
    }
    if prev1 <= prev2 {
        let t = n as f64 * step;
        let (rt, ro) = golden_section(&f, t - step, t + step);
        consider(rt, ro, &mut best, &mut best_obj);
    }
    best
}

fn golden_section(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `sign(w) max(|w| - gamma, 0)`.
pub fn soft_threshold(w: f64, gamma: f64) -> f64 {
    if w > gamma {
        w - gamma
    } else if w < -gamma {
        w + gamma
    } else {
        0.0
    }
}
