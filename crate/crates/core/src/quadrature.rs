//! Gaussian quadrature rules and standard-normal expectations.
//!
//! Nodes and weights come from the Golub-Welsch eigenvalue construction on
//! the Jacobi matrix of the orthogonal polynomial family.

use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(n: usize, off_diag: impl Fn(usize) -> f64, mu0: f64) -> Rule {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = off_diag(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Gauss-Hermite rule for `int exp(-x^2) f(x) dx`.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    cached(&HERMITE, n, || golub_welsch(n, |k| (k as f64 / 2.0).sqrt(), PI.sqrt()))
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    cached(&LEGENDRE, n, || {
        golub_welsch(
            n,
            |k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            },
            2.0,
        )
    })
}

type Cache = OnceLock<Mutex<HashMap<usize, Arc<Rule>>>>;
static HERMITE: Cache = OnceLock::new();
static LEGENDRE: Cache = OnceLock::new();

fn cached(cache: &Cache, n: usize, build: impl FnOnce() -> Rule) -> Arc<Rule> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = map.lock().unwrap().get(&n) {
        return r.clone();
    }
    let rule = Arc::new(build());
    map.lock().unwrap().entry(n).or_insert(rule).clone()
}

/// `E[f(z)]`, `z ~ N(0, 1)`, by an `n`-node Gauss-Hermite rule.
pub fn normal_expectation_gh(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let rule = gauss_hermite(n);
    let s: f64 = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * f(std::f64::consts::SQRT_2 * x)).sum();
    s / PI.sqrt()
}

/// Truncation point of the piecewise rule; the normal tail beyond it is
/// below 1e-32.
const TAIL: f64 = 12.0;
const NODES_PER_PIECE: usize = 20;

/// `E[f(z)]`, `z ~ N(0, 1)`, for `f` smooth between the given breakpoints.
///
/// The line is truncated to `[-12, 12]` and cut at every unit integer and
/// every breakpoint; each piece gets a 20-node Gauss-Legendre rule.
pub fn normal_expectation_piecewise(f: impl Fn(f64) -> f64, breakpoints: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = (-12..=12).map(|k| k as f64).collect();
    cuts.extend(breakpoints.iter().copied().filter(|b| b.is_finite() && b.abs() < TAIL));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let rule = gauss_legendre(NODES_PER_PIECE);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut s = 0.0;
        for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let z = mid + half * x;
            s += wt * f(z) * (-0.5 * z * z).exp();
        }
        total += s * half;
    }
    total * norm
}
