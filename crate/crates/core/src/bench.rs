//! Synthetic studies: accuracy and cost of the approximate LOO formula
//! against literal CV, and the spread of the detected instability point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::crossval::{approx_loo, approx_loo_path, detect_instability, kfold_cv, literal_loo, normalized_mse, CvMethod};
use crate::datagen::gen_instance;
use crate::ensemble::EnsembleParams;
use crate::error::{invalid, Result};
use crate::io::{fmt_f64, Table};
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::rng::derive_seed;
use crate::solver::{geometric_grid, lambda_grid, max_abs_correlation, solve_path, CdOptions, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO};

/// Sizes from which literal LOO is replaced by k-fold CV.
pub const KFOLD_FROM_N: usize = 3200;
pub const BENCH_KFOLD: usize = 10;

#[derive(Debug, Clone)]
pub struct NmseConfig {
    pub ensemble: EnsembleParams,
    pub kind: PenaltyKind,
    pub a: f64,
    pub lambda: f64,
    pub sizes: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub cd: CdOptions,
    pub kfold_from_n: usize,
    pub kfold: usize,
}

impl NmseConfig {
    pub fn new(ensemble: EnsembleParams, kind: PenaltyKind, a: f64, lambda: f64, sizes: Vec<usize>, samples: usize, seed: u64) -> Self {
        NmseConfig { ensemble, kind, a, lambda, sizes, samples, seed, cd: CdOptions::default(), kfold_from_n: KFOLD_FROM_N, kfold: BENCH_KFOLD }
    }
}

/// One instance of the normalized-MSE study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmseSample {
    pub approx: f64,
    pub literal: f64,
    pub nmse: f64,
    pub cd_seconds: f64,
    pub approx_seconds: f64,
    pub literal_seconds: f64,
    pub converged: bool,
}

/// Per-size summary; times are medians over instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseRow {
    pub n: usize,
    pub samples: usize,
    pub method: CvMethod,
    pub median: f64,
    pub q14: f64,
    pub q86: f64,
    pub cd_seconds: f64,
    pub approx_seconds: f64,
    pub literal_seconds: f64,
    pub nonconverged: usize,
}

/// Annealing grid from the trivial amplitude down to `target`, with the
/// step ratio of the default path grid.
pub fn anneal_to(top: f64, target: f64) -> Result<Vec<f64>> {
    if !(target > 0.0) {
        return Err(invalid(format!("target lambda must be positive, got {target}")));
    }
    if top <= target {
        return Ok(vec![target]);
    }
    let step = DEFAULT_GRID_RATIO.powf(1.0 / (DEFAULT_GRID_LEN - 1) as f64);
    let n = ((target / top).ln() / step.ln()).ceil() as usize;
    let mut g = geometric_grid(top, n.max(1) + 1, target / top)?;
    *g.last_mut().unwrap() = target;
    Ok(g)
}

/// Normalized MSE of one synthetic instance at the configured `lambda`.
pub fn nmse_sample(cfg: &NmseConfig, n: usize, seed: u64) -> Result<NmseSample> {
    let inst = gen_instance(n, &cfg.ensemble, seed)?;
    let p = &inst.problem;
    let grid = anneal_to(max_abs_correlation(p), cfg.lambda)?;
    let t = Instant::now();
    let path = solve_path(p, cfg.a, cfg.kind, &grid, &cfg.cd, derive_seed(seed, 1))?;
    let cd_seconds = t.elapsed().as_secs_f64();
    let est = path.estimates.last().unwrap();
    let spec = PenaltySpec::new(cfg.kind, cfg.lambda, cfg.a)?;

    let t = Instant::now();
    let approx = approx_loo(p, est, &spec)?;
    let approx_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let literal = if n >= cfg.kfold_from_n {
        kfold_cv(p, &spec, cfg.kfold, &est.x_hat, &cfg.cd, derive_seed(seed, 2))?
    } else {
        literal_loo(p, &spec, &est.x_hat, &cfg.cd, derive_seed(seed, 2))?
    };
    let literal_seconds = t.elapsed().as_secs_f64();

    Ok(NmseSample {
        approx: approx.epsilon_cv,
        literal: literal.epsilon_cv,
        nmse: normalized_mse(approx.epsilon_cv, literal.epsilon_cv)?,
        cd_seconds,
        approx_seconds,
        literal_seconds,
        converged: est.converged && literal.all_converged && approx.hessian_ok,
    })
}

pub fn nmse_study(cfg: &NmseConfig) -> Result<Vec<NmseRow>> {
    if cfg.samples == 0 {
        return Err(invalid("at least one sample per size is required"));
    }
    cfg.sizes
        .iter()
        .map(|&n| {
            let samples: Vec<NmseSample> = (0..cfg.samples)
                .into_par_iter()
                .map(|s| nmse_sample(cfg, n, derive_seed(cfg.seed, ((n as u64) << 32) | s as u64)))
                .collect::<Result<_>>()?;
            let col = |f: fn(&NmseSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
            let nmse = col(|s| s.nmse);
            Ok(NmseRow {
                n,
                samples: cfg.samples,
                method: if n >= cfg.kfold_from_n { CvMethod::Kfold } else { CvMethod::LiteralLoo },
                median: quantile(&nmse, 0.5),
                q14: quantile(&nmse, 0.14),
                q86: quantile(&nmse, 0.86),
                cd_seconds: quantile(&col(|s| s.cd_seconds), 0.5),
                approx_seconds: quantile(&col(|s| s.approx_seconds), 0.5),
                literal_seconds: quantile(&col(|s| s.literal_seconds), 0.5),
                nonconverged: samples.iter().filter(|s| !s.converged).count(),
            })
        })
        .collect()
}

/// Sample quantile with linear interpolation between order statistics
/// (position `(n-1) p`). NaN for empty input.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone)]
pub struct LambdaCConfig {
    pub ensemble: EnsembleParams,
    pub kind: PenaltyKind,
    pub a: f64,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub grid_len: usize,
    pub grid_ratio: f64,
    pub k_detect: f64,
    pub window: usize,
    pub cd: CdOptions,
}

impl LambdaCConfig {
    pub fn new(ensemble: EnsembleParams, kind: PenaltyKind, a: f64, n: usize, samples: usize, seed: u64) -> Self {
        LambdaCConfig {
            ensemble,
            kind,
            a,
            n,
            samples,
            seed,
            grid_len: DEFAULT_GRID_LEN,
            grid_ratio: DEFAULT_GRID_RATIO,
            k_detect: crate::crossval::DEFAULT_K_DETECT,
            window: crate::crossval::DEFAULT_WINDOW,
            cd: CdOptions::default(),
        }
    }
}

/// Detected `lambda_c` of each sample (`None` when the whole curve is stable).
pub fn lambda_c_study(cfg: &LambdaCConfig) -> Result<Vec<Option<f64>>> {
    (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let seed = derive_seed(cfg.seed, ((cfg.n as u64) << 32) | s as u64);
            let inst = gen_instance(cfg.n, &cfg.ensemble, seed)?;
            let grid = lambda_grid(&inst.problem, cfg.grid_len, cfg.grid_ratio)?;
            let path = solve_path(&inst.problem, cfg.a, cfg.kind, &grid, &cfg.cd, derive_seed(seed, 1))?;
            let curve = detect_instability(approx_loo_path(&inst.problem, &path)?, cfg.k_detect, cfg.window)?;
            Ok(curve.lambda_c)
        })
        .collect()
}

/// Histogram with `ceil(1 + log2 n)` equal-width bins over the data range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn sturges(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("histogram needs a nonempty set of finite values"));
        }
        let bins = (1.0 + (values.len() as f64).log2()).ceil() as usize;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    /// Centre of the most populated bin; ties go to the lowest bin.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = k;
            }
        }
        0.5 * (self.edges[best] + self.edges[best + 1])
    }
}

pub fn sturges_mode(values: &[f64]) -> Result<f64> {
    Ok(Histogram::sturges(values)?.mode())
}

pub fn nmse_table(cfg: &NmseConfig, rows: &[NmseRow]) -> Table {
    let mut t = Table::new(
        "bench_nmse",
        &["N", "samples", "literal_method", "median_nmse", "q14_nmse", "q86_nmse", "cd_seconds", "approx_seconds", "literal_seconds", "nonconverged"],
    )
    .attr("kind", cfg.kind)
    .attr("a", fmt_f64(cfg.a))
    .attr("lambda", fmt_f64(cfg.lambda))
    .attr("seed", cfg.seed);
    for r in rows {
        t.push(vec![
            r.n.to_string(),
            r.samples.to_string(),
            r.method.to_string(),
            fmt_f64(r.median),
            fmt_f64(r.q14),
            fmt_f64(r.q86),
            fmt_f64(r.cd_seconds),
            fmt_f64(r.approx_seconds),
            fmt_f64(r.literal_seconds),
            r.nonconverged.to_string(),
        ]);
    }
    t
}

pub fn lambda_c_table(cfg: &LambdaCConfig, values: &[Option<f64>]) -> Table {
    let mut t = Table::new("bench_lambda_c", &["sample", "lambda_c"])
        .attr("kind", cfg.kind)
        .attr("a", fmt_f64(cfg.a))
        .attr("N", cfg.n)
        .attr("seed", cfg.seed);
    let found: Vec<f64> = values.iter().flatten().copied().collect();
    if let Ok(m) = sturges_mode(&found) {
        t = t.attr("sturges_mode", fmt_f64(m));
    }
    for (s, v) in values.iter().enumerate() {
        t.push(vec![s.to_string(), v.map(fmt_f64).unwrap_or_default()]);
    }
    t
}
