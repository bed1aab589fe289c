//! CSV and JSON files.
//!
//! Every CSV written here starts with a comment line
//! `# sparsecv <table> v1 [key=value ...]`, then a header row. Floats are
//! written in shortest round-trip form, so reading a file back reproduces
//! the values bit for bit.
//!
//! A data directory holds `y.csv` (one column), `A.csv` (row-major, one
//! column per feature), optionally `x0.csv`, and a `meta.json` sidecar.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::crossval::{CvCurve, CvPointResult};
use crate::datagen::Standardization;
use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::problem::RegressionProblem;
use crate::replica::PhaseDiagram;
use crate::solver::{output_mse, SolutionPath};

pub const FORMAT_VERSION: u32 = 1;
pub const RNG_NAME: &str = "ChaCha20Rng";

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
}

impl DatasetMeta {
    pub fn for_problem(problem: &RegressionProblem) -> Self {
        DatasetMeta {
            format_version: FORMAT_VERSION,
            rows: problem.n_rows(),
            cols: problem.n_cols(),
            ensemble: None,
            seed: None,
            rng: None,
            standardization: None,
        }
    }
}

/// An in-memory table: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), attrs: Vec::new(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn attr(mut self, key: &str, value: impl ToString) -> Self {
        self.attrs.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `name` parsed as floats.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column(name).ok_or_else(|| Error::Parse(format!("table '{}' has no column '{name}'", self.name)))?;
        self.rows.iter().map(|r| parse_f64(&r[k])).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        let mut line = format!("# sparsecv {} v{FORMAT_VERSION}", self.name);
        for (k, v) in &self.attrs {
            line.push_str(&format!(" {k}={v}"));
        }
        writeln!(f, "{line}")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut reader = BufReader::new(file);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let (name, attrs) = parse_banner(&first).ok_or_else(|| Error::Parse(format!("{} lacks the '# sparsecv' banner", path.display())))?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.map(|x| x.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
        Ok(Table { name, attrs, header, rows })
    }
}

fn parse_banner(line: &str) -> Option<(String, Vec<(String, String)>)> {
    let mut parts = line.trim().strip_prefix('#')?.split_whitespace();
    if parts.next()? != "sparsecv" {
        return None;
    }
    let name = parts.next()?.to_string();
    let _version = parts.next()?;
    let attrs = parts.filter_map(|p| p.split_once('=').map(|(k, v)| (k.to_string(), v.to_string()))).collect();
    Some((name, attrs))
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: '{s}'")))
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn vector_table(name: &str, col: &str, v: &[f64]) -> Table {
    let mut t = Table::new(name, &[col]).attr("rows", v.len());
    for x in v {
        t.push(vec![fmt_f64(*x)]);
    }
    t
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let t = Table::read(path)?;
    if t.header.len() != 1 {
        return Err(Error::Parse(format!("{} must have exactly one column", path.display())));
    }
    t.rows.iter().map(|r| parse_f64(&r[0])).collect()
}

/// Writes `y.csv`, `A.csv`, `x0.csv` (when present) and `meta.json`.
pub fn write_dataset(dir: &Path, problem: &RegressionProblem, meta: &DatasetMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (m, n) = (problem.n_rows(), problem.n_cols());
    vector_table("y", "y", problem.y().as_slice()).write(&dir.join("y.csv"))?;
    let names: Vec<String> = (0..n).map(|j| format!("a{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut a = Table::new("A", &refs).attr("rows", m).attr("cols", n);
    let d = problem.design();
    for r in 0..m {
        a.push((0..n).map(|c| fmt_f64(d[(r, c)])).collect());
    }
    a.write(&dir.join("A.csv"))?;
    if let Some(x0) = problem.x0() {
        vector_table("x0", "x0", x0.as_slice()).write(&dir.join("x0.csv"))?;
    }
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Reads a data directory written by [`write_dataset`]. `meta.json` and
/// `x0.csv` are optional.
pub fn read_dataset(dir: &Path) -> Result<(RegressionProblem, Option<DatasetMeta>)> {
    let y = read_vector(&dir.join("y.csv"))?;
    let at = Table::read(&dir.join("A.csv"))?;
    let m = at.rows.len();
    let n = at.header.len();
    let mut a = DMatrix::zeros(m, n);
    for (r, row) in at.rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            a[(r, c)] = parse_f64(cell)?;
        }
    }
    let x0_path = dir.join("x0.csv");
    let x0 = if x0_path.exists() { Some(DVector::from_vec(read_vector(&x0_path)?)) } else { None };
    let meta_path = dir.join("meta.json");
    let meta = if meta_path.exists() { Some(serde_json::from_str(&fs::read_to_string(meta_path)?)?) } else { None };
    Ok((RegressionProblem::new(DVector::from_vec(y), a, x0)?, meta))
}

/// Reads a plain CSV with a header row whose first column is the response
/// and the remaining columns the features. Lines starting with `#` are
/// skipped.
pub fn read_combined_csv(path: &Path) -> Result<(RegressionProblem, Vec<String>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header.len() < 2 {
        return Err(Error::Parse("combined CSV needs a response column and at least one feature".into()));
    }
    let mut y = Vec::new();
    let mut vals = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut it = rec.iter();
        y.push(parse_f64(it.next().unwrap_or(""))?);
        for cell in it {
            vals.push(parse_f64(cell)?);
        }
    }
    let n = header.len() - 1;
    let a = DMatrix::from_row_slice(y.len(), n, &vals);
    Ok((RegressionProblem::new(DVector::from_vec(y), a, None)?, header[1..].to_vec()))
}

/// Path table: one row per `lambda`, optionally followed by coefficients.
pub fn path_table(problem: &RegressionProblem, path: &SolutionPath, coefficients: bool) -> Result<Table> {
    let mut header = vec!["lambda", "K", "eps_y", "eps_x", "converged", "sweeps"];
    let names: Vec<String> = (0..problem.n_cols()).map(|j| format!("x{j}")).collect();
    if coefficients {
        header.extend(names.iter().map(String::as_str));
    }
    let mut t = Table::new("path", &header).attr("kind", path.kind).attr("a", fmt_f64(path.a)).attr("seed", path.seed);
    for (l, e) in path.lambdas.iter().zip(&path.estimates) {
        let eps_x = problem.x0().map(|x0| crate::solver::input_mse(e, x0.as_slice())).transpose()?;
        let mut row = vec![
            fmt_f64(*l),
            e.active_set.len().to_string(),
            fmt_f64(output_mse(problem, e)),
            fmt_opt(eps_x),
            e.converged.to_string(),
            e.iterations.to_string(),
        ];
        if coefficients {
            row.extend(e.x_hat.iter().map(|v| fmt_f64(*v)));
        }
        t.push(row);
    }
    Ok(t)
}

/// One CV curve with the path it came from and optional literal CV values.
pub struct CvRun<'a> {
    pub curve: &'a CvCurve,
    pub path: &'a SolutionPath,
    pub literal: Option<&'a [CvPointResult]>,
}

/// CV table in long format, one row per `(a, lambda)`. The literal columns
/// are present when any run carries literal values, empty where one does not.
pub fn cv_table(runs: &[CvRun]) -> Result<Table> {
    let with_literal = runs.iter().any(|r| r.literal.is_some());
    let mut header = vec!["a", "lambda", "cv_error", "error_bar", "stable", "hessian_ok", "K", "lambda_c"];
    if with_literal {
        header.extend(["literal_cv_error", "literal_error_bar", "literal_method", "literal_converged"]);
    }
    let mut t = Table::new("cv", &header);
    if let Some(r) = runs.first() {
        t = t.attr("kind", r.path.kind);
    }
    for run in runs {
        let (curve, path) = (run.curve, run.path);
        if curve.points.len() != path.len() {
            return Err(Error::DimensionMismatch("CV curve and path differ in length".into()));
        }
        for (k, p) in curve.points.iter().enumerate() {
            let mut row = vec![
                fmt_f64(path.a),
                fmt_f64(p.lambda),
                fmt_f64(p.epsilon_cv),
                fmt_f64(p.error_bar),
                curve.stable_mask[k].to_string(),
                p.hessian_ok.to_string(),
                path.estimates[k].support_size().to_string(),
                fmt_opt(curve.lambda_c),
            ];
            if with_literal {
                match run.literal {
                    Some(lit) => {
                        let q = lit.get(k).ok_or_else(|| Error::DimensionMismatch("literal CV shorter than the curve".into()))?;
                        row.extend([fmt_f64(q.epsilon_cv), fmt_f64(q.error_bar), q.method.to_string(), q.all_converged.to_string()]);
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            t.push(row);
        }
    }
    Ok(t)
}

/// Theoretical phase-diagram grid, one row per `(lambda, a)` cell.
pub fn phase_table(d: &PhaseDiagram) -> Table {
    let e = &d.ensemble;
    let mut t = Table::new("phase", &["lambda", "a", "status", "at_lhs", "eps_x", "eps_y", "TP", "FP", "R", "rho_hat"])
        .attr("kind", d.kind)
        .attr("alpha", fmt_f64(e.alpha))
        .attr("rho0", fmt_f64(e.rho0))
        .attr("sigma_x2", fmt_f64(e.sigma_x2))
        .attr("sigma_d2", fmt_f64(e.sigma_d2));
    for row in &d.cells {
        for c in row {
            let s = &c.solution;
            let o = s.observables;
            t.push(vec![
                fmt_f64(c.lambda),
                fmt_f64(c.a),
                s.status.to_string(),
                fmt_opt(s.at_lhs),
                fmt_opt(o.map(|o| o.eps_x)),
                fmt_opt(o.map(|o| o.eps_y)),
                fmt_opt(o.map(|o| o.tp)),
                fmt_opt(o.map(|o| o.fp)),
                fmt_opt(o.map(|o| o.r)),
                fmt_opt(o.map(|o| o.rho_hat)),
            ]);
        }
    }
    t
}

/// Boundary lines in long format: `line` is `AT`, `RS` or `IMSE`.
pub fn boundary_table(d: &PhaseDiagram) -> Table {
    let mut t = Table::new("boundaries", &["line", "lambda", "a"]).attr("kind", d.kind);
    for (name, get) in [
        ("AT", (|b: &crate::replica::BoundaryPoint| b.a_at) as fn(&_) -> _),
        ("RS", |b| b.a_rs),
        ("IMSE", |b| b.a_imse),
    ] {
        for b in &d.boundaries {
            if let Some(a) = get(b) {
                t.push(vec![name.into(), fmt_f64(b.lambda), fmt_f64(a)]);
            }
        }
    }
    t
}

/// Per-`a` minimisers of `eps_x` and `R`, plus the global minimum banner.
pub fn imse_table(d: &PhaseDiagram) -> Table {
    let mut t = Table::new("imse", &["a", "lambda", "eps_x", "R", "TP", "FP", "at_stable", "lambda_min_R", "min_R"])
        .attr("kind", d.kind)
        .attr("lasso_limit", d.lasso_limit);
    if let Some(g) = d.global_min {
        t = t.attr("global_lambda", fmt_f64(g.lambda)).attr("global_a", fmt_f64(g.a)).attr("global_at_stable", g.at_stable);
    }
    for p in &d.imse {
        t.push(vec![
            fmt_f64(p.a),
            fmt_f64(p.lambda),
            fmt_f64(p.eps_x),
            fmt_f64(p.r),
            fmt_f64(p.tp),
            fmt_f64(p.fp),
            p.at_stable.to_string(),
            fmt_f64(p.lambda_min_r),
            fmt_f64(p.min_r),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_instance;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 123456789.12345679] {
            assert_eq!(parse_f64(&fmt_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = EnsembleParams::unit_power(0.5, 0.2, 0.1).unwrap();
        let inst = gen_instance(30, &e, 4).unwrap();
        let mut meta = DatasetMeta::for_problem(&inst.problem);
        meta.ensemble = Some(e);
        meta.seed = Some(4);
        write_dataset(dir.path(), &inst.problem, &meta).unwrap();
        let (p, m) = read_dataset(dir.path()).unwrap();
        assert_eq!(p, inst.problem);
        assert_eq!(m.unwrap(), meta);
        let a = Table::read(&dir.path().join("A.csv")).unwrap();
        assert_eq!(a.name, "A");
        assert!(a.attrs.contains(&("rows".into(), "15".into())));
    }

    #[test]
    fn combined_csv_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("d.csv");
        fs::write(&f, "# comment\ntarget,u,v\n1.5,1,2\n2.5,3,4\n-1,0,1\n").unwrap();
        let (p, names) = read_combined_csv(&f).unwrap();
        assert_eq!(names, vec!["u", "v"]);
        assert_eq!(p.n_rows(), 3);
        assert_eq!(p.design()[(1, 1)], 4.0);
        assert_eq!(p.y()[2], -1.0);
    }

    #[test]
    fn cv_table_round_trips() {
        use crate::crossval::{approx_loo_path, detect_instability};
        use crate::solver::{lambda_grid, solve_path, CdOptions};
        let e = EnsembleParams::unit_power(0.5, 0.2, 0.1).unwrap();
        let inst = gen_instance(40, &e, 8).unwrap();
        let p = &inst.problem;
        let grid = lambda_grid(p, 12, 0.05).unwrap();
        let path = solve_path(p, 3.0, crate::PenaltyKind::Scad, &grid, &CdOptions::default(), 1).unwrap();
        let curve = detect_instability(approx_loo_path(p, &path).unwrap(), 3.0, 2).unwrap();
        let t = cv_table(&[CvRun { curve: &curve, path: &path, literal: None }]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("cv.csv");
        t.write(&f).unwrap();
        let back = Table::read(&f).unwrap();
        assert_eq!(back, t);
        let cv = back.floats("cv_error").unwrap();
        for (x, q) in cv.iter().zip(&curve.points) {
            assert_eq!(x.to_bits(), q.epsilon_cv.to_bits());
        }
    }

    #[test]
    fn missing_banner_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("y.csv");
        fs::write(&f, "y\n1\n").unwrap();
        assert!(matches!(Table::read(&f), Err(Error::Parse(_))));
    }
}
