//! Gaussian averages of the effective single-site estimator.
//!
//! For a local field `h = sigma z`, `z ~ N(0,1)`, the single-site estimator
//! `x*(h)` minimises `(Qh/2) x^2 - h x + J(x)`. Its support splits into
//! analytic pieces whose boundaries, scaled by `sqrt(2) sigma`, are
//! `theta1 < theta2 <= theta3`:
//!
//! ```text
//! |h| <= lambda                       x* = 0
//! lambda < |h| <= lambda (1 + Qh)     x* = (h - sgn(h) lambda) / Qh                (SCAD, LASSO)
//! (transition piece)                  x* = (h - sgn(h) b) / (Qh - c)
//! |h| > a lambda Qh                   x* = h / Qh
//! ```
//!
//! with `c = 1/(a-1), b = a lambda c` for SCAD and `c = 1/a, b = lambda` for
//! MCP (whose transition piece starts right at `lambda`). The bundle carries
//!
//! ```text
//! xi1 = Qh       E[x*^2 ; soft]
//! xi2 = (Qh - c) E[x*^2 ; transition]
//! xi3 = Qh       E[x*^2 ; ols]
//! xi4 = P(transition) = erfc(theta2) - erfc(theta3)
//! ```
//!
//! SCAD and LASSO use closed forms; MCP squares are integrated numerically.

use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::quadrature::normal_expectation_piecewise;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiBundle {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// `erfc(theta1)`, the probability of a nonzero estimate.
    pub rho_hat_contrib: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub xi4: f64,
}

impl XiBundle {
    fn zero_field() -> Self {
        XiBundle {
            theta1: f64::INFINITY,
            theta2: f64::INFINITY,
            theta3: f64::INFINITY,
            rho_hat_contrib: 0.0,
            xi1: 0.0,
            xi2: 0.0,
            xi3: 0.0,
            xi4: 0.0,
        }
    }
}

/// Transition-piece curvature shift `c` and offset `b` of the single-site
/// estimator.
pub(crate) fn transition_params(spec: &PenaltySpec) -> (f64, f64) {
    match spec.kind {
        PenaltyKind::Lasso => (0.0, spec.lambda),
        PenaltyKind::Scad => {
            let c = 1.0 / (spec.a - 1.0);
            (c, spec.a * spec.lambda * c)
        }
        PenaltyKind::Mcp => (1.0 / spec.a, spec.lambda),
    }
}

/// The single-site estimator `x*(h; 1/Qh)`.
pub fn single_site_estimate(h: f64, qh: f64, spec: &PenaltySpec) -> f64 {
    spec.prox(h / qh, 1.0 / qh)
}

/// Closed-form Gaussian averages (quadrature for the MCP squares).
pub fn xi_closed_form(sigma: f64, qh: f64, spec: &PenaltySpec) -> Result<XiBundle> {
    spec.validate()?;
    let (c, _) = transition_params(spec);
    if !(qh > c) {
        return Err(invalid(format!("Qh = {qh} must exceed the penalty concavity {c}")));
    }
    if !(sigma >= 0.0) {
        return Err(invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(xi_unchecked(sigma, qh, spec))
}

pub(crate) fn xi_unchecked(sigma: f64, qh: f64, spec: &PenaltySpec) -> XiBundle {
    if sigma == 0.0 {
        return XiBundle::zero_field();
    }
    let l = spec.lambda;
    let s2 = sigma * sigma;
    let scale = SQRT_2 * sigma;
    let t1 = l / scale;
    let e1 = erfc(t1);
    let g1 = (-t1 * t1).exp();
    let sqpi = PI.sqrt();
    match spec.kind {
        PenaltyKind::Lasso => {
            let xi1 = s2 / qh * (-2.0 * t1 / sqpi * g1 + (1.0 + 2.0 * t1 * t1) * e1);
            XiBundle {
                theta1: t1,
                theta2: f64::INFINITY,
                theta3: f64::INFINITY,
                rho_hat_contrib: e1,
                xi1,
                xi2: 0.0,
                xi3: 0.0,
                xi4: 0.0,
            }
        }
        PenaltyKind::Scad => {
            let a = spec.a;
            let t2 = l * (1.0 + qh) / scale;
            let t3 = a * l * qh / scale;
            let e2 = erfc(t2);
            let e3 = erfc(t3);
            let g2 = (-t2 * t2).exp();
            let g3 = (-t3 * t3).exp();
            let xi4 = e2 - e3;
            let xi1 = s2 / qh * (-2.0 * t1 / sqpi * (g1 + (qh - 1.0) * g2) + (1.0 + 2.0 * t1 * t1) * (e1 - e2));
            let k = t3 / (qh * (a - 1.0));
            let xi2 = s2 / (qh - 1.0 / (a - 1.0))
                * (2.0 / sqpi * (t2 * g2 - t3 * g3 - 2.0 * k * (g2 - g3)) + (1.0 + 2.0 * k * k) * xi4);
            let xi3 = s2 / qh * (2.0 * t3 / sqpi * g3 + e3);
            XiBundle { theta1: t1, theta2: t2, theta3: t3, rho_hat_contrib: e1, xi1, xi2, xi3, xi4 }
        }
        PenaltyKind::Mcp => {
            let (c, b) = transition_params(spec);
            let t3 = spec.a * l * qh / scale;
            let e3 = erfc(t3);
            let lo = l / sigma;
            let hi = spec.a * l * qh / sigma;
            let bps = [-hi, -lo, lo, hi];
            let trans = normal_expectation_piecewise(
                |z| {
                    let h = (sigma * z).abs();
                    if h > l && h <= spec.a * l * qh {
                        let x = (h - b) / (qh - c);
                        x * x
                    } else {
                        0.0
                    }
                },
                &bps,
            );
            let ols = normal_expectation_piecewise(
                |z| {
                    let h = (sigma * z).abs();
                    if h > spec.a * l * qh {
                        let x = h / qh;
                        x * x
                    } else {
                        0.0
                    }
                },
                &bps,
            );
            XiBundle {
                theta1: t1,
                theta2: t1,
                theta3: t3,
                rho_hat_contrib: e1,
                xi1: 0.0,
                xi2: (qh - c) * trans,
                xi3: qh * ols,
                xi4: e1 - e3,
            }
        }
    }
}

/// Gaussian averages needed by the equations of state at one `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SiteAverages {
    /// `P(x* != 0)`.
    pub nonzero: f64,
    /// `E[d x*/d h]`.
    pub slope: f64,
    /// `E[x*^2]`.
    pub square: f64,
    /// `E[(d x*/d h)^2]`.
    pub slope_sq: f64,
    pub xi4: f64,
}

pub(crate) fn site_averages(sigma: f64, qh: f64, spec: &PenaltySpec) -> SiteAverages {
    let (c, _) = transition_params(spec);
    let x = xi_unchecked(sigma, qh, spec);
    let gap = qh - c;
    SiteAverages {
        nonzero: x.rho_hat_contrib,
        slope: (x.rho_hat_contrib + c / gap * x.xi4) / qh,
        square: x.xi1 / qh + x.xi2 / gap + x.xi3 / qh,
        slope_sq: x.rho_hat_contrib / (qh * qh) + (1.0 / (gap * gap) - 1.0 / (qh * qh)) * x.xi4,
        xi4: x.xi4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::normal_expectation_gh;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    /// Defining integrals of the bundle, evaluated from the single-site
    /// estimator by breakpoint-aware quadrature.
    fn quadrature_bundle(sigma: f64, qh: f64, spec: &PenaltySpec) -> [f64; 5] {
        let l = spec.lambda;
        let (c, _) = transition_params(spec);
        let (soft_hi, trans_hi) = match spec.kind {
            PenaltyKind::Scad => (l * (1.0 + qh), spec.a * l * qh),
            PenaltyKind::Mcp => (l, spec.a * l * qh),
            PenaltyKind::Lasso => (f64::INFINITY, f64::INFINITY),
        };
        let bps: Vec<f64> = [l, soft_hi, trans_hi].iter().flat_map(|b| [b / sigma, -b / sigma]).collect();
        let piece = |lo: f64, hi: f64, weight: f64, sq: bool| {
            normal_expectation_piecewise(
                |z| {
                    let h = sigma * z;
                    if h.abs() > lo && h.abs() <= hi {
                        if sq {
                            let x = single_site_estimate(h, qh, spec);
                            weight * x * x
                        } else {
                            1.0
                        }
                    } else {
                        0.0
                    }
                },
                &bps,
            )
        };
        [
            piece(l, f64::INFINITY, 1.0, false),
            piece(l, soft_hi, qh, true),
            piece(soft_hi, trans_hi, qh - c, true),
            piece(trans_hi, f64::INFINITY, qh, true),
            piece(soft_hi, trans_hi, 1.0, false),
        ]
    }

    fn as_array(x: &XiBundle) -> [f64; 5] {
        [x.rho_hat_contrib, x.xi1, x.xi2, x.xi3, x.xi4]
    }

    #[test]
    fn scad_closed_forms_match_quadrature() {
        let spec = PenaltySpec::scad(1.0, 3.0).unwrap();
        let x = xi_closed_form(1.0, 0.8, &spec).unwrap();
        let q = quadrature_bundle(1.0, 0.8, &spec);
        for (a, b) in as_array(&x).iter().zip(q) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // sum of the pieces is E[x*^2], compare against plain Gauss-Hermite
        let total = x.xi1 / 0.8 + x.xi2 / (0.8 - 0.5) + x.xi3 / 0.8;
        let gh = normal_expectation_gh(|z| single_site_estimate(z, 0.8, &spec).powi(2), 200);
        assert!((total - gh).abs() < 1e-3, "{total} vs {gh}");
    }

    #[test]
    fn random_closed_forms_match_quadrature() {
        let mut rng = rng_from_seed(17);
        for _ in 0..1000 {
            let sigma = 0.05 + 3.0 * rng.random::<f64>();
            let lambda = 0.01 + 3.0 * rng.random::<f64>();
            let a = 1.2 + 30.0 * rng.random::<f64>();
            let c = 1.0 / (a - 1.0);
            let qh = c + 0.01 + (1.0 - c - 0.01).max(0.0) * rng.random::<f64>() + 0.5 * rng.random::<f64>();
            let spec = PenaltySpec::scad(lambda, a).unwrap();
            let x = xi_closed_form(sigma, qh, &spec).unwrap();
            let q = quadrature_bundle(sigma, qh, &spec);
            for (k, (a1, b1)) in as_array(&x).iter().zip(q).enumerate() {
                assert!((a1 - b1).abs() < 1e-8, "component {k}: {a1} vs {b1} (sigma {sigma} lambda {lambda} a {a} qh {qh})");
            }
        }
    }

    #[test]
    fn mcp_and_lasso_bundles_match_quadrature() {
        for (spec, qh) in [(PenaltySpec::mcp(0.7, 3.0).unwrap(), 0.6), (PenaltySpec::lasso(0.7).unwrap(), 0.6)] {
            for sigma in [0.3, 1.0, 2.5] {
                let x = xi_closed_form(sigma, qh, &spec).unwrap();
                let q = quadrature_bundle(sigma, qh, &spec);
                for (a1, b1) in as_array(&x).iter().zip(q) {
                    assert!((a1 - b1).abs() < 1e-10, "{:?}: {a1} vs {b1}", spec.kind);
                }
            }
        }
    }

    #[test]
    fn zero_field_limit() {
        let spec = PenaltySpec::scad(1.0, 3.0).unwrap();
        let x = xi_closed_form(0.0, 0.8, &spec).unwrap();
        assert_eq!(x.rho_hat_contrib, 0.0);
        assert_eq!([x.xi1, x.xi2, x.xi3, x.xi4], [0.0; 4]);
        let tiny = xi_closed_form(1e-3, 0.8, &spec).unwrap();
        assert!(tiny.rho_hat_contrib < 1e-300);
        assert!(tiny.xi1.abs() < 1e-300 && tiny.xi4.abs() < 1e-300);
    }

    #[test]
    fn large_a_reduces_to_lasso() {
        let scad = PenaltySpec::scad(0.8, 1e8).unwrap();
        let lasso = PenaltySpec::lasso(0.8).unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let s = xi_closed_form(sigma, 0.7, &scad).unwrap();
            let l = xi_closed_form(sigma, 0.7, &lasso).unwrap();
            assert!(s.theta3 > 1e6);
            assert!((s.xi4 - (erfc(s.theta2) - erfc(s.theta3))).abs() < 1e-15);
            let sq_s = s.xi1 / 0.7 + s.xi2 / (0.7 - 1.0 / (1e8 - 1.0)) + s.xi3 / 0.7;
            let sq_l = l.xi1 / 0.7;
            assert!((sq_s - sq_l).abs() < 1e-6, "{sq_s} vs {sq_l}");
        }
    }

    #[test]
    fn theta_order_and_xi4_range() {
        let spec = PenaltySpec::scad(0.5, 4.0).unwrap();
        let x = xi_closed_form(1.3, 0.9, &spec).unwrap();
        assert!(x.theta1 < x.theta2 && x.theta2 < x.theta3);
        assert!(x.xi4 >= -1.0 && x.xi4 <= 1.0);
        assert!(xi_closed_form(1.0, 0.3, &spec).is_err());
    }
}
