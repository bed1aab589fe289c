use std::str::FromStr;

use sparsecv::solver::{geometric_grid, lambda_grid};
use sparsecv::{RegressionProblem, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// `len` points down to `ratio` times the top.
    Geometric { len: usize, ratio: f64 },
    Explicit(Vec<f64>),
}

impl LambdaGrid {
    /// Grid whose top is the smallest amplitude with an all-zero solution.
    pub fn for_problem(&self, problem: &RegressionProblem) -> Result<Vec<f64>> {
        match self {
            LambdaGrid::Geometric { len, ratio } => lambda_grid(problem, *len, *ratio),
            LambdaGrid::Explicit(v) => Ok(v.clone()),
        }
    }

    pub fn with_top(&self, top: f64) -> Result<Vec<f64>> {
        match self {
            LambdaGrid::Geometric { len, ratio } => geometric_grid(top, *len, *ratio),
            LambdaGrid::Explicit(v) => Ok(v.clone()),
        }
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"))).collect()
}

impl FromStr for LambdaGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some((l, e)) = s.split_once(':') {
            let len = l.trim().parse::<usize>().map_err(|_| format!("grid length '{l}' is not a count"))?;
            let ratio = e.trim().parse::<f64>().map_err(|_| format!("grid ratio '{e}' is not a number"))?;
            if len < 2 || !(ratio > 0.0 && ratio < 1.0) {
                return Err("L:eps needs L >= 2 and 0 < eps < 1".into());
            }
            return Ok(LambdaGrid::Geometric { len, ratio });
        }
        let mut v = parse_list(s)?;
        if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err("lambda values must be positive".into());
        }
        v.sort_by(|a, b| b.total_cmp(a));
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err("lambda values must be distinct".into());
        }
        Ok(LambdaGrid::Explicit(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AGrid(pub Vec<f64>);

impl FromStr for AGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let v = match parts.as_slice() {
            [lo, hi, n] => {
                let lo = lo.trim().parse::<f64>().map_err(|_| format!("'{lo}' is not a number"))?;
                let hi = hi.trim().parse::<f64>().map_err(|_| format!("'{hi}' is not a number"))?;
                let n = n.trim().parse::<usize>().map_err(|_| format!("'{n}' is not a count"))?;
                if n < 2 || !(hi > lo) {
                    return Err("lo:hi:n needs hi > lo and n >= 2".into());
                }
                (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
            }
            [_] => {
                let mut v = parse_list(s)?;
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            _ => return Err("expected lo:hi:n or a comma-separated list".into()),
        };
        Ok(AGrid(v))
    }
}
