use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Teacher ensemble: `A_{mu i} ~ N(0, 1/M)`, Bernoulli-Gaussian signal with
/// density `rho0` and nonzero variance `sigma_x2`, Gaussian noise of variance
/// `sigma_d2`, and `alpha = M/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub alpha: f64,
    pub rho0: f64,
    pub sigma_x2: f64,
    pub sigma_d2: f64,
}

impl EnsembleParams {
    pub fn new(alpha: f64, rho0: f64, sigma_x2: f64, sigma_d2: f64) -> Result<Self> {
        let e = EnsembleParams { alpha, rho0, sigma_x2, sigma_d2 };
        e.validate()?;
        Ok(e)
    }

    /// Signal power per component fixed to one: `sigma_x2 = 1/rho0`.
    pub fn unit_power(alpha: f64, rho0: f64, sigma_d2: f64) -> Result<Self> {
        Self::new(alpha, rho0, 1.0 / rho0, sigma_d2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.rho0 > 0.0 && self.rho0 <= 1.0) {
            return Err(invalid(format!("rho0 must lie in (0, 1], got {}", self.rho0)));
        }
        if !(self.sigma_x2 > 0.0 && self.sigma_x2.is_finite()) {
            return Err(invalid(format!("sigma_x2 must be positive, got {}", self.sigma_x2)));
        }
        if !(self.sigma_d2 >= 0.0 && self.sigma_d2.is_finite()) {
            return Err(invalid(format!("sigma_d2 must be >= 0, got {}", self.sigma_d2)));
        }
        Ok(())
    }

    /// `rho0 * sigma_x2`, the mean signal power per component.
    pub fn signal_power(&self) -> f64 {
        self.rho0 * self.sigma_x2
    }
}
