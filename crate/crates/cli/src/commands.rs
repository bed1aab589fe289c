use anyhow::{bail, Context};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

use sparsecv::bench::{lambda_c_study, lambda_c_table, nmse_study, nmse_table, sturges_mode, LambdaCConfig, NmseConfig};
use sparsecv::crossval::{approx_loo_path, detect_instability, literal_cv_path, one_std_error_select, CvCurve, CvPointResult};
use sparsecv::datagen::{gen_instance, standardize, Standardization};
use sparsecv::io::{self, boundary_table, cv_table, fmt_f64, imse_table, path_table, phase_table, read_combined_csv, read_dataset, write_dataset, CvRun, DatasetMeta, Table};
use sparsecv::replica::{phase_boundaries, EosOptions, PhaseOptions};
use sparsecv::solver::{solve_path, CdOptions, SolutionPath};
use sparsecv::{EnsembleParams, Error, PenaltyKind, RegressionProblem};

use crate::args::*;

/// Raised after outputs are written when some solve did not converge.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidParameter(msg.into()).into()
}

fn ensemble(e: &EnsembleArgs) -> sparsecv::Result<EnsembleParams> {
    EnsembleParams::new(e.alpha, e.rho0, e.sigma_x2, e.sigma_d2)
}

fn cd_options(delta: f64, max_sweeps: usize) -> anyhow::Result<CdOptions> {
    let o = CdOptions { delta, max_sweeps };
    o.validate()?;
    Ok(o)
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_table(dir: &Path, file: &str, t: &Table) -> anyhow::Result<PathBuf> {
    let p = dir.join(file);
    t.write(&p).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

fn write_sidecar(dir: &Path, command: &str, params: Value, results: Value) -> anyhow::Result<()> {
    let doc = json!({
        "format_version": io::FORMAT_VERSION,
        "tool": "sparsecv",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "rng": io::RNG_NAME,
        "parameters": params,
        "results": results,
    });
    let p = dir.join(format!("{command}.json"));
    fs::write(&p, serde_json::to_string_pretty(&doc)?).with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}

struct Loaded {
    problem: RegressionProblem,
    standardization: Option<Standardization>,
    features: Option<Vec<String>>,
}

fn load(data: &Path, standardize_data: bool) -> anyhow::Result<Loaded> {
    let (problem, features, meta_std) = if data.is_dir() {
        let (p, meta) = read_dataset(data).with_context(|| format!("reading data directory {}", data.display()))?;
        (p, None, meta.and_then(|m| m.standardization))
    } else if data.is_file() {
        let (p, names) = read_combined_csv(data).with_context(|| format!("reading {}", data.display()))?;
        (p, Some(names), None)
    } else {
        return Err(usage(format!("no such data file or directory: {}", data.display())));
    };
    if standardize_data {
        let (p, s) = standardize(&problem)?;
        if !s.dropped.is_empty() {
            log::warn!("dropped {} constant column(s): {:?}", s.dropped.len(), s.dropped);
        }
        return Ok(Loaded { problem: p, standardization: Some(s), features });
    }
    Ok(Loaded { problem, standardization: meta_std, features })
}

fn describe(loaded: &Loaded) -> Value {
    json!({
        "rows": loaded.problem.n_rows(),
        "cols": loaded.problem.n_cols(),
        "has_ground_truth": loaded.problem.x0().is_some(),
        "features": loaded.features,
        "standardization": loaded.standardization,
    })
}

fn nonconverged(path: &SolutionPath) -> Vec<f64> {
    path.lambdas.iter().zip(&path.estimates).filter(|(_, e)| !e.converged).map(|(l, _)| *l).collect()
}

pub fn gen(args: GenArgs) -> anyhow::Result<()> {
    let e = ensemble(&args.ensemble)?;
    let inst = gen_instance(args.n, &e, args.seed)?;
    let mut meta = DatasetMeta::for_problem(&inst.problem);
    meta.ensemble = Some(e);
    meta.seed = Some(args.seed);
    meta.rng = Some(io::RNG_NAME.into());
    write_dataset(&args.out, &inst.problem, &meta).with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote M={} N={} to {}", inst.problem.n_rows(), inst.problem.n_cols(), args.out.display());
    Ok(())
}

pub fn fit(args: FitArgs) -> anyhow::Result<()> {
    let loaded = load(&args.data.data, args.data.standardize)?;
    let s = &args.solver;
    let opts = cd_options(s.delta, s.max_sweeps)?;
    let kind = PenaltyKind::from(s.kind);
    let grid = s.lambda_grid.for_problem(&loaded.problem)?;
    let path = solve_path(&loaded.problem, args.a, kind, &grid, &opts, s.seed)?;
    prepare_out(&args.out)?;
    write_table(&args.out, "path.csv", &path_table(&loaded.problem, &path, args.coefficients)?)?;
    let bad = nonconverged(&path);
    write_sidecar(
        &args.out,
        "fit",
        json!({"kind": kind, "a": args.a, "lambda_grid": grid, "delta": s.delta, "max_sweeps": s.max_sweeps, "seed": s.seed}),
        json!({"data": describe(&loaded), "all_converged": bad.is_empty(), "nonconverged_lambdas": bad}),
    )?;
    if !bad.is_empty() {
        return Err(NumericalFailure(format!("coordinate descent did not converge at {} lambda value(s)", bad.len())).into());
    }
    Ok(())
}

struct CvResult {
    path: SolutionPath,
    curve: CvCurve,
    literal: Option<Vec<CvPointResult>>,
}

pub fn cv(args: CvArgs) -> anyhow::Result<()> {
    let loaded = load(&args.data.data, args.data.standardize)?;
    let p = &loaded.problem;
    let s = &args.solver;
    let opts = cd_options(s.delta, s.max_sweeps)?;
    let kind = PenaltyKind::from(s.kind);
    if args.kfold.is_some() && !args.literal {
        return Err(usage("--kfold only applies together with --literal"));
    }
    let grid = s.lambda_grid.for_problem(p)?;
    let results: Vec<CvResult> = args
        .a
        .par_iter()
        .map(|&a| -> anyhow::Result<CvResult> {
            let path = solve_path(p, a, kind, &grid, &opts, s.seed)?;
            let curve = detect_instability(approx_loo_path(p, &path)?, args.k_detect, args.window)?;
            let literal = if args.literal { Some(literal_cv_path(p, &path, args.kfold, &opts, s.seed)?) } else { None };
            Ok(CvResult { path, curve, literal })
        })
        .collect::<anyhow::Result<_>>()?;

    prepare_out(&args.out)?;
    let runs: Vec<CvRun> = results.iter().map(|r| CvRun { curve: &r.curve, path: &r.path, literal: r.literal.as_deref() }).collect();
    write_table(&args.out, "cv.csv", &cv_table(&runs)?)?;

    let selection = match args.select {
        Some(SelectRule::OneStdError) => {
            let cands: Vec<_> = results.iter().map(|r| (r.path.a, &r.curve, &r.path)).collect();
            Some(one_std_error_select(&cands))
        }
        None => None,
    };
    let bad: Vec<Value> = results
        .iter()
        .filter(|r| !r.path.all_converged())
        .map(|r| json!({"a": r.path.a, "lambdas": nonconverged(&r.path)}))
        .collect();
    let curves: Vec<Value> = results
        .iter()
        .map(|r| {
            let min = r.curve.stable_minimum().map(|k| json!({"lambda": r.curve.points[k].lambda, "cv_error": r.curve.points[k].epsilon_cv}));
            json!({"a": r.path.a, "lambda_c": r.curve.lambda_c, "stable_minimum": min})
        })
        .collect();
    let sel_json = match &selection {
        Some(Ok(sel)) => json!(sel),
        Some(Err(e)) => json!({"error": e.to_string()}),
        None => Value::Null,
    };
    write_sidecar(
        &args.out,
        "cv",
        json!({
            "kind": kind, "a": args.a, "lambda_grid": grid, "delta": s.delta, "max_sweeps": s.max_sweeps, "seed": s.seed,
            "literal": args.literal, "kfold": args.kfold, "k_detect": args.k_detect, "window": args.window,
            "select": args.select.map(|_| "one-std-error"),
        }),
        json!({"data": describe(&loaded), "curves": curves, "selection": sel_json, "nonconverged": bad}),
    )?;
    if let Some(Ok(sel)) = &selection {
        let mut t = Table::new("selection", &["a", "lambda", "K", "cv_error", "error_bar", "threshold", "min_a", "min_lambda"]);
        t.push(vec![
            fmt_f64(sel.a),
            fmt_f64(sel.lambda),
            sel.support_size.to_string(),
            fmt_f64(sel.cv_error),
            fmt_f64(sel.error_bar),
            fmt_f64(sel.threshold),
            fmt_f64(sel.min_a),
            fmt_f64(sel.min_lambda),
        ]);
        write_table(&args.out, "selection.csv", &t)?;
        println!("selected a={} lambda={} K={} cv_error={}", sel.a, sel.lambda, sel.support_size, sel.cv_error);
    }
    if let Some(Err(e)) = selection {
        return Err(e.into());
    }
    if !bad.is_empty() {
        return Err(NumericalFailure("coordinate descent did not converge on some path points".into()).into());
    }
    Ok(())
}

pub fn phase(args: PhaseArgs) -> anyhow::Result<()> {
    match args.mode {
        PhaseMode::Theory => phase_theory(args),
        PhaseMode::Empirical => phase_empirical(args),
    }
}

fn phase_theory(args: PhaseArgs) -> anyhow::Result<()> {
    if args.data.is_some() {
        return Err(usage("--data is only used with --mode empirical"));
    }
    let e = ensemble(&args.ensemble)?;
    let kind = PenaltyKind::from(args.kind);
    let lambdas = args.lambda_grid.clone().unwrap_or(crate::grid::LambdaGrid::Geometric { len: 40, ratio: 1e-4 }).with_top(args.lambda_max)?;
    let opts = PhaseOptions { eos: EosOptions { damping: args.damping, ..EosOptions::default() }, ..PhaseOptions::default() };
    let d = phase_boundaries(&e, kind, &lambdas, &args.a_grid.0, &opts)?;
    prepare_out(&args.out)?;
    write_table(&args.out, "phase.csv", &phase_table(&d))?;
    write_table(&args.out, "boundaries.csv", &boundary_table(&d))?;
    write_table(&args.out, "imse.csv", &imse_table(&d))?;
    write_sidecar(
        &args.out,
        "phase",
        json!({"mode": "theory", "kind": kind, "ensemble": e, "lambda_grid": lambdas, "a_grid": args.a_grid.0, "damping": args.damping}),
        json!({"global_minimum": d.global_min, "lasso_limit": d.lasso_limit, "roc_optimal_a": d.roc_optimal_a()}),
    )?;
    Ok(())
}

fn phase_empirical(args: PhaseArgs) -> anyhow::Result<()> {
    let Some(data) = &args.data else {
        return Err(usage("--mode empirical needs --data"));
    };
    let loaded = load(data, args.standardize)?;
    let p = &loaded.problem;
    let kind = PenaltyKind::from(args.kind);
    let opts = cd_options(args.delta, args.max_sweeps)?;
    let grid = args.lambda_grid.clone().unwrap_or(crate::grid::LambdaGrid::Geometric { len: 100, ratio: 0.01 }).for_problem(p)?;
    let rows: Vec<(SolutionPath, CvCurve)> = args
        .a_grid
        .0
        .par_iter()
        .map(|&a| -> anyhow::Result<_> {
            let path = solve_path(p, a, kind, &grid, &opts, args.seed)?;
            let curve = detect_instability(approx_loo_path(p, &path)?, args.k_detect, args.window)?;
            Ok((path, curve))
        })
        .collect::<anyhow::Result<_>>()?;

    prepare_out(&args.out)?;
    let runs: Vec<CvRun> = rows.iter().map(|(path, curve)| CvRun { curve, path, literal: None }).collect();
    write_table(&args.out, "phase_empirical.csv", &cv_table(&runs)?)?;
    let mut cve = Table::new("a_cve", &["a", "lambda_c", "lambda_cve", "cv_error", "error_bar", "K"]).attr("kind", kind);
    for (path, curve) in &rows {
        let lc = curve.lambda_c.map(fmt_f64).unwrap_or_default();
        match curve.stable_minimum() {
            Some(k) => cve.push(vec![
                fmt_f64(path.a),
                lc,
                fmt_f64(curve.points[k].lambda),
                fmt_f64(curve.points[k].epsilon_cv),
                fmt_f64(curve.points[k].error_bar),
                path.estimates[k].support_size().to_string(),
            ]),
            None => cve.push(vec![fmt_f64(path.a), lc, String::new(), String::new(), String::new(), String::new()]),
        }
    }
    write_table(&args.out, "a_cve.csv", &cve)?;
    let bad = rows.iter().filter(|(path, _)| !path.all_converged()).count();
    write_sidecar(
        &args.out,
        "phase",
        json!({"mode": "empirical", "kind": kind, "lambda_grid": grid, "a_grid": args.a_grid.0, "delta": args.delta,
               "seed": args.seed, "k_detect": args.k_detect, "window": args.window}),
        json!({"data": describe(&loaded), "rows_with_nonconverged_points": bad}),
    )?;
    if bad > 0 {
        return Err(NumericalFailure(format!("coordinate descent did not converge on {bad} a-row(s)")).into());
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> anyhow::Result<()> {
    let e = ensemble(&args.ensemble)?;
    let kind = PenaltyKind::from(args.kind);
    let cd = cd_options(args.delta, sparsecv::solver::DEFAULT_MAX_SWEEPS)?;
    if args.sizes.is_empty() || args.samples == 0 {
        bail!(usage("--sizes and --samples must be nonempty"));
    }
    prepare_out(&args.out)?;
    match args.study {
        Study::Nmse => {
            let mut cfg = NmseConfig::new(e, kind, args.a, args.lambda, args.sizes.clone(), args.samples, args.seed);
            cfg.cd = cd;
            let rows = nmse_study(&cfg)?;
            write_table(&args.out, "bench_nmse.csv", &nmse_table(&cfg, &rows))?;
            write_sidecar(
                &args.out,
                "bench",
                json!({"study": "nmse", "ensemble": e, "kind": kind, "a": args.a, "lambda": args.lambda,
                       "sizes": args.sizes, "samples": args.samples, "seed": args.seed, "delta": args.delta,
                       "kfold_from_n": cfg.kfold_from_n, "kfold": cfg.kfold}),
                json!({"rows": rows}),
            )?;
        }
        Study::LambdaC => {
            let mut summary = Vec::new();
            for &n in &args.sizes {
                let mut cfg = LambdaCConfig::new(e, kind, args.a, n, args.samples, args.seed);
                cfg.cd = cd;
                cfg.k_detect = args.k_detect;
                cfg.window = args.window;
                let v = lambda_c_study(&cfg)?;
                write_table(&args.out, &format!("bench_lambda_c_N{n}.csv"), &lambda_c_table(&cfg, &v))?;
                let found: Vec<f64> = v.iter().flatten().copied().collect();
                summary.push(json!({"n": n, "detected": found.len(), "sturges_mode": sturges_mode(&found).ok()}));
            }
            write_sidecar(
                &args.out,
                "bench",
                json!({"study": "lambda-c", "ensemble": e, "kind": kind, "a": args.a, "sizes": args.sizes,
                       "samples": args.samples, "seed": args.seed, "delta": args.delta, "k_detect": args.k_detect, "window": args.window}),
                json!({"sizes": summary}),
            )?;
        }
    }
    Ok(())
}
