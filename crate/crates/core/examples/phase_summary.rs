//! Prints where the replica theory puts the best SCAD estimator for a few
//! ensembles: the global minimum of the input MSE and the `a` that minimises
//! the ROC distance.

use sparsecv::replica::{phase_boundaries, PhaseOptions};
use sparsecv::solver::geometric_grid;
use sparsecv::{EnsembleParams, PenaltyKind};

fn main() -> sparsecv::Result<()> {
    let lambdas = geometric_grid(10.0, 40, 1e-3)?;
    let a_grid: Vec<f64> = (0..30).map(|k| 2.0 + 0.02 * 5000f64.powf(k as f64 / 29.0)).collect();
    for (alpha, rho0, sigma_d2) in [(0.5, 0.2, 0.1), (0.5, 0.1, 0.1), (0.8, 0.2, 0.1), (0.5, 0.2, 1.0)] {
        let e = EnsembleParams::unit_power(alpha, rho0, sigma_d2)?;
        let d = phase_boundaries(&e, PenaltyKind::Scad, &lambdas, &a_grid, &PhaseOptions::default())?;
        print!("alpha={alpha} rho0={rho0} sigma_d2={sigma_d2}: ");
        match d.global_min {
            Some(g) => print!("min eps_x {:.5} at a={:.2} lambda={:.3} (AT-stable: {})", g.eps_x, g.a, g.lambda, g.at_stable),
            None if d.lasso_limit => print!("eps_x keeps falling with a (LASSO limit)"),
            None => print!("no minimum on the grid"),
        }
        println!(", ROC-optimal a {:?}", d.roc_optimal_a());
    }
    Ok(())
}
