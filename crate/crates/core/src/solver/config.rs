use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularisation weights and iteration budgets of the reconstruction.
///
/// The JSON form uses exactly these field names; unknown or missing fields
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// ℓ1 weight on the ridgelet coefficients.
    pub lambda: f64,
    /// Total-variation weight.
    pub lambda_tv: f64,
    /// Augmented-Lagrangian weight of the S = A c constraint.
    pub rho1: f64,
    /// Augmented-Lagrangian weight of the S = Z constraint.
    pub rho2: f64,
    /// Outer iteration cap.
    pub n_iter: usize,
    /// Relative S-change stopping tolerance.
    pub epsilon: f64,
    pub bp_inner_iters: usize,
    pub tv_inner_iters: usize,
    /// Ridge weight of the Tikhonov initialisation.
    pub tikhonov_mu: f64,
}

impl Default for SolverConfig {
    /// Simulation-study settings.
    fn default() -> Self {
        Self {
            lambda: 0.02,
            lambda_tv: 0.005,
            rho1: 0.01,
            rho2: 0.01,
            n_iter: 8,
            epsilon: 1e-4,
            bp_inner_iters: 50,
            tv_inner_iters: 20,
            tikhonov_mu: 0.2,
        }
    }
}

impl SolverConfig {
    /// Settings used for the in-vivo data.
    pub fn in_vivo() -> Self {
        Self {
            lambda: 0.06,
            lambda_tv: 1e-5,
            rho1: 3.0,
            rho2: 3.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda", self.lambda),
            ("lambda_tv", self.lambda_tv),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} = {w} must be a finite value >= 0")));
            }
        }
        if self.n_iter < 1 {
            return Err(Error::Config("n_iter must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon = {} must be > 0", self.epsilon)));
        }
        if !(self.tikhonov_mu > 0.0 && self.tikhonov_mu.is_finite()) {
            return Err(Error::Config(format!(
                "tikhonov_mu = {} must be > 0",
                self.tikhonov_mu
            )));
        }
        if self.lambda > 0.0 && self.rho1 == 0.0 {
            return Err(Error::Config("rho1 must be > 0 when lambda > 0".into()));
        }
        if self.lambda_tv > 0.0 && self.rho2 == 0.0 {
            return Err(Error::Config("rho2 must be > 0 when lambda_tv > 0".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
