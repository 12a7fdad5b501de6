//! Log-linear diffusion tensor fits.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::qspace::QSpaceDesign;

/// Signals are clamped here before taking logarithms.
pub const SIGNAL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorFit {
    /// Symmetric tensor, mm²/s.
    pub tensor: [[f64; 3]; 3],
    /// Eigenvalues, descending.
    pub eigenvalues: [f64; 3],
    pub fa: f64,
    /// Unit eigenvector of the largest eigenvalue with y ≥ 0.
    pub principal: [f64; 3],
    pub s0: f64,
}

/// FA = sqrt(3/2)·‖λ − λ̄‖/‖λ‖ with negative eigenvalues clamped to 0.
pub fn fractional_anisotropy(eigenvalues: [f64; 3]) -> f64 {
    let l = eigenvalues.map(|v| v.max(0.0));
    let norm = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let mean = (l[0] + l[1] + l[2]) / 3.0;
    let dev = ((l[0] - mean).powi(2) + (l[1] - mean).powi(2) + (l[2] - mean).powi(2)).sqrt();
    ((1.5f64).sqrt() * dev / norm).min(1.0)
}

/// Flips `v` into the y ≥ 0 half (ties broken on z, then x).
pub fn canonical_axis(v: [f64; 3]) -> [f64; 3] {
    let flip = v[1] < 0.0 || (v[1] == 0.0 && (v[2] < 0.0 || (v[2] == 0.0 && v[0] < 0.0)));
    if flip {
        [-v[0], -v[1], -v[2]]
    } else {
        v
    }
}

/// Precomputed least-squares operator for one design.
///
/// Rows are log S(q_j) = log S0 − b qᵀDq for every direction plus one
/// b = 0 row carrying log S0 itself; without it the intercept and the
/// tensor trace cannot be separated on a single shell.
#[derive(Clone, Debug)]
pub struct DtiModel {
    pinv: DMatrix<f64>,
    n_q: usize,
}

impl DtiModel {
    pub fn new(design: &QSpaceDesign) -> Result<Self> {
        let b = design.bvalue();
        let n = design.n_q();
        let quad = DMatrix::from_fn(n, 6, |j, c| {
            let g = design.directions()[j];
            match c {
                0 => g[0] * g[0],
                1 => g[1] * g[1],
                2 => g[2] * g[2],
                3 => 2.0 * g[0] * g[1],
                4 => 2.0 * g[0] * g[2],
                _ => 2.0 * g[1] * g[2],
            }
        });
        let sv = quad.clone().svd(false, false).singular_values;
        let (hi, lo) = (sv.max(), sv.min());
        if n < 6 || !(lo > 1e-8 * hi) {
            return Err(Error::invalid(format!(
                "{n} directions do not determine a tensor (singular values {lo:.3e}/{hi:.3e})"
            )));
        }
        let mut x = DMatrix::zeros(n + 1, 7);
        x[(0, 0)] = 1.0;
        for j in 0..n {
            x[(j + 1, 0)] = 1.0;
            for c in 0..6 {
                x[(j + 1, c + 1)] = -b * quad[(j, c)];
            }
        }
        let pinv = x
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numerical {
                stage: "dti",
                detail: e.to_string(),
            })?;
        Ok(Self { pinv, n_q: n })
    }

    /// Fit with b0 = 1 (b0-normalised data).
    pub fn fit(&self, signal: &[f64]) -> Result<TensorFit> {
        self.fit_with_b0(signal, 1.0)
    }

    pub fn fit_with_b0(&self, signal: &[f64], b0: f64) -> Result<TensorFit> {
        if signal.len() != self.n_q {
            return Err(Error::Shape(format!(
                "{} samples for a {}-direction tensor model",
                signal.len(),
                self.n_q
            )));
        }
        let mut y = DVector::zeros(self.n_q + 1);
        y[0] = b0.max(SIGNAL_FLOOR).ln();
        for (j, &s) in signal.iter().enumerate() {
            y[j + 1] = s.max(SIGNAL_FLOOR).ln();
        }
        let p = &self.pinv * y;
        let (dxx, dyy, dzz, dxy, dxz, dyz) = (p[1], p[2], p[3], p[4], p[5], p[6]);
        let m = Matrix3::new(dxx, dxy, dxz, dxy, dyy, dyz, dxz, dyz, dzz);
        let eig = SymmetricEigen::new(m);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.map(|i| eig.eigenvalues[i]);
        let v = eig.eigenvectors.column(order[0]);
        let n = v.norm();
        Ok(TensorFit {
            tensor: [[dxx, dxy, dxz], [dxy, dyy, dyz], [dxz, dyz, dzz]],
            eigenvalues,
            fa: fractional_anisotropy(eigenvalues),
            principal: canonical_axis([v[0] / n, v[1] / n, v[2] / n]),
            s0: p[0].exp(),
        })
    }
}

/// One-off fit; prefer [`DtiModel`] for many voxels.
pub fn fit_dti(signal: &[f64], design: &QSpaceDesign) -> Result<TensorFit> {
    DtiModel::new(design)?.fit(signal)
}
