use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparsecv"));
    c.env("SPARSECV_WORKERS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sparsecv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV written by the tool (banner and header skipped).
fn rows(p: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(p).unwrap();
    text.lines().skip(2).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn header(p: &Path) -> Vec<String> {
    let text = fs::read_to_string(p).unwrap();
    text.lines().nth(1).unwrap().split(',').map(String::from).collect()
}

fn gen(dir: &Path, n: &str, seed: &str) {
    let o = run(&["gen", "--n", n, "--alpha", "0.5", "--rho0", "0.2", "--sigma-d2", "0.1", "--seed", seed, "--out", s(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["cv", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--kind", "ridge", "--data", "x", "--out", "y"]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--data", "/nonexistent/data", "--out", s(tmp.path())]).status.code(), Some(1));
    assert_eq!(run(&["gen", "--n", "10", "--rho0", "1.5", "--out", s(tmp.path())]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--data", "x", "--lambda-grid", "1:0.5", "--out", "y"]).status.code(), Some(1));
    let o = bin().env("SPARSECV_WORKERS", "zero").args(["gen", "--n", "10", "--out", s(tmp.path())]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_writes_expected_shape_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "100", "1");
    gen(&b, "100", "1");
    for f in ["y.csv", "A.csv", "x0.csv", "meta.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }
    assert_eq!(rows(&a.join("y.csv")).len(), 50);
    let arows = rows(&a.join("A.csv"));
    assert_eq!(arows.len(), 50);
    assert_eq!(arows[0].len(), 100);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"], 50);
    assert_eq!(meta["seed"], 1);
}

#[test]
fn fit_above_trivial_threshold_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "40", "2");
    let out = tmp.path().join("fit");
    let o = run(&["fit", "--data", s(&d), "--lambda-grid", "1000,500,100", "--coefficients", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = header(&out.join("path.csv"));
    let k = h.iter().position(|c| c == "K").unwrap();
    let x0 = h.iter().position(|c| c == "x0").unwrap();
    for r in rows(&out.join("path.csv")) {
        assert_eq!(r[k], "0");
        assert!(r[x0..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
    assert!(out.join("fit.json").exists());
}

#[test]
fn lasso_and_scad_with_huge_a_give_the_same_path() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "60", "3");
    let (l, sc) = (tmp.path().join("l"), tmp.path().join("s"));
    for (kind, a, out) in [("lasso", "3", &l), ("scad", "1e8", &sc)] {
        let o = run(&["fit", "--data", s(&d), "--kind", kind, "--a", a, "--lambda-grid", "30:0.01", "--coefficients", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (rl, rs) = (rows(&l.join("path.csv")), rows(&sc.join("path.csv")));
    let first = header(&l.join("path.csv")).iter().position(|c| c == "x0").unwrap();
    assert_eq!(rl.len(), 30);
    for (a, b) in rl.iter().zip(&rs) {
        for (u, v) in a[first..].iter().zip(&b[first..]) {
            let (u, v): (f64, f64) = (u.parse().unwrap(), v.parse().unwrap());
            assert!((u - v).abs() <= 1e-5, "{u} vs {v}");
        }
    }
}

#[test]
fn cv_with_literal_and_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "40", "4");
    let out = tmp.path().join("cv");
    let o = run(&[
        "cv", "--data", s(&d), "--a", "3,6", "--lambda-grid", "15:0.05", "--literal", "--kfold", "5", "--select", "one-std-error", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = header(&out.join("cv.csv"));
    assert!(h.contains(&"literal_cv_error".to_string()) && h.contains(&"stable".to_string()));
    assert_eq!(rows(&out.join("cv.csv")).len(), 30);
    let sel = rows(&out.join("selection.csv"));
    assert_eq!(sel.len(), 1);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cv.json")).unwrap()).unwrap();
    assert_eq!(side["command"], "cv");
    assert!(side["results"]["selection"]["lambda"].is_number());
}

#[test]
fn kfold_without_literal_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "20", "5");
    let o = run(&["cv", "--data", s(&d), "--kfold", "5", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn combined_csv_pipeline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("data.csv");
    let mut text = String::from("target,u,v,w,const\n");
    for i in 0..12 {
        let u = (i as f64 * 0.7).sin();
        let v = (i as f64 * 1.3).cos();
        let w = (i * i % 7) as f64;
        text.push_str(&format!("{},{u},{v},{w},1\n", 2.0 * u - v + 0.1 * w));
    }
    fs::write(&f, text).unwrap();
    let out = tmp.path().join("o");
    let o = run(&["cv", "--data", s(&f), "--standardize", "--lambda-grid", "10:0.05", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cv.json")).unwrap()).unwrap();
    assert_eq!(side["results"]["data"]["standardization"]["dropped"][0], 3);
}

#[test]
fn theory_phase_writes_boundaries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ph");
    let o = run(&["phase", "--mode", "theory", "--a-grid", "1.5,2.5,4,8", "--lambda-grid", "6:0.05", "--lambda-max", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ph = rows(&out.join("phase.csv"));
    assert_eq!(ph.len(), 24);
    let h = header(&out.join("phase.csv"));
    let (ia, is) = (h.iter().position(|c| c == "a").unwrap(), h.iter().position(|c| c == "status").unwrap());
    for r in &ph {
        if r[ia].parse::<f64>().unwrap() < 2.0 {
            assert_eq!(r[is], "NON_EXISTENT");
        }
    }
    assert!(out.join("boundaries.csv").exists() && out.join("imse.csv").exists() && out.join("phase.json").exists());
}

#[test]
fn empirical_phase_writes_a_cve() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "40", "6");
    let out = tmp.path().join("ph");
    let o = run(&["phase", "--mode", "empirical", "--data", s(&d), "--a-grid", "2.5,4", "--lambda-grid", "12:0.05", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("phase_empirical.csv")).len(), 24);
    assert_eq!(rows(&out.join("a_cve.csv")).len(), 2);
}

#[test]
fn bench_studies_run_and_repeat() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["bench", "--study", "nmse", "--sizes", "30,60", "--samples", "3", "--seed", "9", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ra, rb) = (rows(&a.join("bench_nmse.csv")), rows(&b.join("bench_nmse.csv")));
    assert_eq!(ra.len(), 2);
    // columns 3..=5 hold the nmse statistics; timings differ between runs
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x[..6], y[..6]);
    }
    let o = run(&["bench", "--study", "lambda-c", "--sizes", "40", "--samples", "3", "--a", "5", "--out", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&a.join("bench_lambda_c_N40.csv")).len(), 3);
}
