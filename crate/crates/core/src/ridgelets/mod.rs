//! Spherical-ridgelet dictionary and spherical-harmonic ODF utilities.
//!
//! A ridgelet at level `j` and orientation `v` is the zonal function
//!
//! ```text
//! Ψ_{j,v}(u) = Σ_{n even ≤ n_max} (2n+1)/(4π) · λ_n · w_j(n) · P_n(u·v)
//! ```
//!
//! with Funk–Radon eigenvalues `λ_n = 2π P_n(0)` and band weights built from
//! `κ_j(n) = exp(−ρ 2^{−j} n(n+1))`: the coarse level `j = −1` uses `κ_0`,
//! levels `j ≥ 0` use `κ_{j+1} − κ_j`. Only even degrees enter, so every atom
//! is antipodally symmetric.

mod odf;
mod sh;
mod tessellation;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qspace::{spiral_points, QSpaceDesign};

pub use odf::{odf_from_signal, OdfEngine, OdfPipeline};
pub use sh::{
    coefficient_degrees, funk_radon_weight, legendre, legendre_all, legendre_at_zero,
    n_even_coefficients, real_sh_even, ShBasis,
};
pub use tessellation::Tessellation;

/// Generating parameters of a ridgelet dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeletParams {
    pub rho: f64,
    pub n_max: usize,
    pub levels: Vec<i32>,
    pub orientations_per_level: Vec<usize>,
}

impl Default for RidgeletParams {
    fn default() -> Self {
        Self {
            rho: 0.5,
            n_max: 16,
            levels: vec![-1, 0, 1],
            orientations_per_level: vec![16, 64, 256],
        }
    }
}

impl RidgeletParams {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("ridgelet rho {} must be > 0", self.rho)));
        }
        if self.levels.is_empty() {
            return Err(Error::invalid("ridgelet levels must be non-empty"));
        }
        if self.levels.len() != self.orientations_per_level.len() {
            return Err(Error::invalid(
                "one orientation count is required per ridgelet level",
            ));
        }
        if self.levels.iter().any(|&j| j < -1) {
            return Err(Error::invalid("ridgelet levels start at -1"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("ridgelet levels must be strictly increasing"));
        }
        if self.orientations_per_level.iter().any(|&c| c < 4) {
            return Err(Error::invalid("each level needs at least 4 orientations"));
        }
        if self.n_max % 2 == 1 {
            return Err(Error::invalid(format!("n_max {} must be even", self.n_max)));
        }
        Ok(())
    }

    fn kappa(&self, j: i32, n: usize) -> f64 {
        let nf = n as f64;
        (-self.rho * 2f64.powi(-j) * nf * (nf + 1.0)).exp()
    }

    /// Band weight w_j(n) of level `j`.
    pub fn band_weight(&self, j: i32, n: usize) -> f64 {
        if j < 0 {
            self.kappa(0, n)
        } else {
            self.kappa(j + 1, n) - self.kappa(j, n)
        }
    }

    /// Legendre-series coefficients (2n+1)/(4π)·λ_n·w_j(n) for n = 0..=n_max
    /// (odd entries are zero).
    pub fn zonal_coefficients(&self, j: i32) -> Vec<f64> {
        (0..=self.n_max)
            .map(|n| {
                if n % 2 == 1 {
                    0.0
                } else {
                    (2 * n + 1) as f64 / (4.0 * std::f64::consts::PI)
                        * funk_radon_weight(n)
                        * self.band_weight(j, n)
                }
            })
            .collect()
    }
}

/// Over-complete ridgelet dictionary sampled at a q-space design.
#[derive(Clone, Debug)]
pub struct RidgeletDictionary {
    matrix: DMatrix<f64>,
    params: RidgeletParams,
    orientations: Vec<[f64; 3]>,
    atom_level: Vec<i32>,
    column_scales: Vec<f64>,
}

impl RidgeletDictionary {
    pub fn build(design: &QSpaceDesign, params: &RidgeletParams) -> Result<Self> {
        Self::build_for_directions(design.directions(), params)
    }

    pub fn build_for_directions(directions: &[[f64; 3]], params: &RidgeletParams) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("cannot build a dictionary on an empty design"));
        }
        params.validate()?;
        let mut orientations = Vec::new();
        let mut atom_level = Vec::new();
        for (&j, &count) in params.levels.iter().zip(&params.orientations_per_level) {
            for v in spiral_points(count) {
                orientations.push(v);
                atom_level.push(j);
            }
        }
        let mut dict = Self {
            matrix: DMatrix::zeros(0, 0),
            params: params.clone(),
            orientations,
            atom_level,
            column_scales: Vec::new(),
        };
        let raw = dict.evaluate_raw(directions);
        let scales: Vec<f64> = raw.column_iter().map(|c| c.norm()).collect();
        if let Some(m) = scales.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::Numerical {
                stage: "dictionary",
                detail: format!("atom {m} vanishes on the design"),
            });
        }
        dict.matrix = raw;
        for (m, &s) in scales.iter().enumerate() {
            dict.matrix.column_mut(m).unscale_mut(s);
        }
        dict.column_scales = scales;
        Ok(dict)
    }

    fn evaluate_raw(&self, directions: &[[f64; 3]]) -> DMatrix<f64> {
        let coeffs: Vec<(i32, Vec<f64>)> = self
            .params
            .levels
            .iter()
            .map(|&j| (j, self.params.zonal_coefficients(j)))
            .collect();
        let mut out = DMatrix::zeros(directions.len(), self.orientations.len());
        for (m, (v, &j)) in self.orientations.iter().zip(&self.atom_level).enumerate() {
            let c = &coeffs.iter().find(|(l, _)| *l == j).expect("level present").1;
            for (i, u) in directions.iter().enumerate() {
                let t = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
                let p = legendre_all(self.params.n_max, t);
                out[(i, m)] = c.iter().zip(&p).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// Atoms evaluated at arbitrary unit directions, in normalised-column
    /// units (divided by the recorded column scales).
    pub fn evaluate(&self, directions: &[[f64; 3]]) -> DMatrix<f64> {
        let mut out = self.evaluate_raw(directions);
        for (m, &s) in self.column_scales.iter().enumerate() {
            out.column_mut(m).unscale_mut(s);
        }
        out
    }

    /// Wraps an explicit matrix (rows = directions). Columns are used as
    /// given; the matrix cannot be re-evaluated at other directions.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let m = matrix.ncols();
        Self {
            matrix,
            params: RidgeletParams {
                rho: 0.0,
                n_max: 0,
                levels: Vec::new(),
                orientations_per_level: Vec::new(),
            },
            orientations: Vec::new(),
            atom_level: Vec::new(),
            column_scales: vec![1.0; m],
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn params(&self) -> &RidgeletParams {
        &self.params
    }

    pub fn n_q(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn orientations(&self) -> &[[f64; 3]] {
        &self.orientations
    }

    pub fn atom_levels(&self) -> &[i32] {
        &self.atom_level
    }

    pub fn column_scales(&self) -> &[f64] {
        &self.column_scales
    }

    /// Largest eigenvalue of AᵀA by power iteration on the smaller Gram AAᵀ.
    pub fn spectral_norm_sq(&self) -> f64 {
        let a = &self.matrix;
        let gram = a * a.transpose();
        let n = gram.nrows();
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut est = 0.0;
        for _ in 0..1000 {
            let w = &gram * &v;
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = w / norm;
            let prev = est;
            est = next.dot(&(&gram * &next));
            v = next;
            if (est - prev).abs() <= 1e-14 * est {
                break;
            }
        }
        est
    }
}

/// Ridge-regularised least-squares fit of dictionary coefficients,
/// precomputed as a linear operator (M × N_q).
#[derive(Clone, Debug)]
pub struct RidgeFit {
    operator: DMatrix<f64>,
}

impl RidgeFit {
    /// `ridge > 0` uses Aᵀ(AAᵀ + ridge·I)⁻¹; `ridge = 0` the pseudo-inverse
    /// (minimum-norm solution).
    pub fn new(dict: &RidgeletDictionary, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge {ridge} must be >= 0")));
        }
        let a = dict.matrix();
        let operator = if ridge > 0.0 {
            let mut gram = a * a.transpose();
            for i in 0..gram.nrows() {
                gram[(i, i)] += ridge;
            }
            let chol = gram.cholesky().ok_or(Error::Numerical {
                stage: "ridge-fit",
                detail: "AAᵀ + ridge·I is not positive definite".into(),
            })?;
            // (AAᵀ + rI)⁻¹ A, transposed
            chol.solve(a).transpose()
        } else {
            a.clone()
                .pseudo_inverse(1e-12 * a.norm().max(1.0))
                .map_err(|e| Error::Numerical {
                    stage: "ridge-fit",
                    detail: e.to_string(),
                })?
        };
        Ok(Self { operator })
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn fit(&self, signal: &[f64]) -> Vec<f64> {
        let s = DVector::from_column_slice(signal);
        (&self.operator * s).as_slice().to_vec()
    }
}

/// argmin ‖A c − s‖² + ridge·‖c‖².
pub fn fit_coefficients_ls(
    dict: &RidgeletDictionary,
    signal: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    if signal.len() != dict.n_q() {
        return Err(Error::Shape(format!(
            "signal of length {} for a dictionary with {} rows",
            signal.len(),
            dict.n_q()
        )));
    }
    Ok(RidgeFit::new(dict, ridge)?.fit(signal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::spiral_directions;

    fn default_dict() -> RidgeletDictionary {
        let d = spiral_directions(64, 2000.0).unwrap();
        RidgeletDictionary::build(&d, &RidgeletParams::default()).unwrap()
    }

    #[test]
    fn funk_radon_lambda_zero_is_two_pi() {
        assert_eq!(funk_radon_weight(0), 2.0 * std::f64::consts::PI);
    }

    #[test]
    fn default_is_overcomplete_and_normalised() {
        let dict = default_dict();
        assert_eq!(dict.n_q(), 64);
        assert_eq!(dict.n_atoms(), 336);
        for c in dict.matrix().column_iter() {
            assert!((c.norm() - 1.0).abs() <= 1e-12);
        }
        assert!(dict.column_scales().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn atoms_are_antipodally_even() {
        let dict = default_dict();
        let u = [0.36, 0.48, 0.8];
        let a = dict.evaluate(&[u]);
        let b = dict.evaluate(&[[-u[0], -u[1], -u[2]]]);
        for m in 0..dict.n_atoms() {
            assert!((a[(0, m)] - b[(0, m)]).abs() <= 1e-10);
        }
    }

    #[test]
    fn no_duplicated_atoms() {
        let dict = default_dict();
        let g = dict.matrix().transpose() * dict.matrix();
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    worst = worst.max(g[(i, j)].abs());
                }
            }
        }
        assert!(worst < 1.0 - 1e-6, "max coherence {worst}");
    }

    #[test]
    fn truncation_is_stable() {
        let d = spiral_directions(64, 2000.0).unwrap();
        let a = default_dict();
        let params = RidgeletParams {
            n_max: 20,
            ..RidgeletParams::default()
        };
        let b = RidgeletDictionary::build(&d, &params).unwrap();
        let diff = (a.matrix() - b.matrix()).abs().max();
        assert!(diff < 1e-6, "max entry change {diff}");
    }

    #[test]
    fn build_is_deterministic() {
        let a = default_dict();
        let b = default_dict();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn build_rejects_bad_inputs() {
        assert!(RidgeletDictionary::build_for_directions(&[], &RidgeletParams::default()).is_err());
        let d = spiral_directions(64, 2000.0).unwrap();
        let bad = RidgeletParams {
            orientations_per_level: vec![16, 3, 256],
            ..RidgeletParams::default()
        };
        assert!(RidgeletDictionary::build(&d, &bad).is_err());
        let bad = RidgeletParams {
            rho: 0.0,
            ..RidgeletParams::default()
        };
        assert!(RidgeletDictionary::build(&d, &bad).is_err());
    }

    #[test]
    fn ls_fit_reproduces_single_atom() {
        let dict = default_dict();
        let s: Vec<f64> = dict.matrix().column(100).iter().copied().collect();
        let c = fit_coefficients_ls(&dict, &s, 0.0).unwrap();
        let rec = dict.matrix() * DVector::from_vec(c);
        for (r, v) in rec.iter().zip(&s) {
            assert!((r - v).abs() < 1e-8);
        }
    }

    #[test]
    fn ls_fit_of_zero_is_zero() {
        let dict = default_dict();
        let c = fit_coefficients_ls(&dict, &[0.0; 64], 1e-3).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ridge_fit_satisfies_normal_equations() {
        let dict = default_dict();
        let s: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 / 7.0).sin()).collect();
        let ridge = 1e-3;
        let c = DVector::from_vec(fit_coefficients_ls(&dict, &s, ridge).unwrap());
        let sv = DVector::from_column_slice(&s);
        let a = dict.matrix();
        let resid = a.transpose() * (a * &c - &sv) + &c * ridge;
        let scale = (a.transpose() * &sv).norm();
        assert!(resid.norm() <= 1e-8 * scale, "{} vs {}", resid.norm(), scale);
    }

    #[test]
    fn ridge_fit_is_linear() {
        let dict = default_dict();
        let fit = RidgeFit::new(&dict, 1e-3).unwrap();
        let s: Vec<f64> = (0..64).map(|i| (i as f64 * 0.1).cos()).collect();
        let s2: Vec<f64> = s.iter().map(|v| v * 2.0).collect();
        let (c, c2) = (fit.fit(&s), fit.fit(&s2));
        for (a, b) in c.iter().zip(&c2) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
