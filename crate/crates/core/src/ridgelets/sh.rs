//! Legendre polynomials and the real, even-degree spherical-harmonic basis.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Legendre polynomials P_0..=P_n at `x`.
pub fn legendre_all(n_max: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n_max + 1);
    p.push(1.0);
    if n_max >= 1 {
        p.push(x);
    }
    for n in 1..n_max {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * p[n] - nf * p[n - 1]) / (nf + 1.0);
        p.push(next);
    }
    p
}

pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_all(n, x)[n]
}

/// P_n(0) = (−1)^{n/2} (n−1)!!/n!! for even n, 0 for odd n.
pub fn legendre_at_zero(n: usize) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let mut v = 1.0;
    let mut k = 2;
    while k <= n {
        v *= (k - 1) as f64 / k as f64;
        k += 2;
    }
    if (n / 2) % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Funk–Radon eigenvalue 2π P_n(0) of degree `n`.
pub fn funk_radon_weight(n: usize) -> f64 {
    2.0 * PI * legendre_at_zero(n)
}

/// Number of coefficients of an even basis truncated at degree `l_max`.
pub fn n_even_coefficients(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 2) / 2
}

/// Orthonormal real spherical harmonics, even degrees only, ordered by
/// degree then order m = −l..=l.
#[allow(clippy::needless_range_loop)]
pub fn real_sh_even(l_max: usize, dir: &[f64; 3]) -> Vec<f64> {
    let x = dir[2].clamp(-1.0, 1.0);
    let s = (1.0 - x * x).max(0.0).sqrt();
    let phi = dir[1].atan2(dir[0]);

    // normalised associated Legendre values, plm[l][m]
    let mut plm = vec![vec![0.0; l_max + 1]; l_max + 1];
    plm[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=l_max {
        let mf = m as f64;
        plm[m][m] = plm[m - 1][m - 1] * ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
    }
    for m in 0..l_max {
        plm[m + 1][m] = x * (2.0 * m as f64 + 3.0).sqrt() * plm[m][m];
    }
    for m in 0..=l_max {
        for l in (m + 2)..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            plm[l][m] = a * (x * plm[l - 1][m] - b * plm[l - 2][m]);
        }
    }

    let mut out = Vec::with_capacity(n_even_coefficients(l_max));
    for l in (0..=l_max).step_by(2) {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            let v = match m.signum() {
                0 => plm[l][0],
                1 => std::f64::consts::SQRT_2 * plm[l][am] * (am as f64 * phi).cos(),
                _ => std::f64::consts::SQRT_2 * plm[l][am] * (am as f64 * phi).sin(),
            };
            out.push(v);
        }
    }
    out
}

/// Degree of each coefficient in the [`real_sh_even`] ordering.
pub fn coefficient_degrees(l_max: usize) -> Vec<usize> {
    (0..=l_max)
        .step_by(2)
        .flat_map(|l| std::iter::repeat_n(l, 2 * l + 1))
        .collect()
}

/// Even SH evaluation matrix for a fixed direction set.
#[derive(Clone, Debug)]
pub struct ShBasis {
    degree: usize,
    matrix: DMatrix<f64>,
}

impl ShBasis {
    pub fn new(directions: &[[f64; 3]], degree: usize) -> Result<Self> {
        if degree % 2 == 1 {
            return Err(Error::invalid(format!("SH degree {degree} must be even")));
        }
        if directions.is_empty() {
            return Err(Error::invalid("SH basis needs directions"));
        }
        let nc = n_even_coefficients(degree);
        let mut matrix = DMatrix::zeros(directions.len(), nc);
        for (i, d) in directions.iter().enumerate() {
            for (c, v) in real_sh_even(degree, d).into_iter().enumerate() {
                matrix[(i, c)] = v;
            }
        }
        Ok(Self { degree, matrix })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Least-squares fitting operator (pseudo-inverse), coefficients × directions.
    pub fn fit_operator(&self) -> Result<DMatrix<f64>> {
        if self.matrix.nrows() < self.matrix.ncols() {
            return Err(Error::invalid(format!(
                "{} directions cannot determine {} SH coefficients",
                self.matrix.nrows(),
                self.matrix.ncols()
            )));
        }
        self.matrix
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numerical {
                stage: "sh-fit",
                detail: e.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_closed_forms() {
        for &x in &[-0.7, 0.0, 0.3, 1.0] {
            let p = legendre_all(4, x);
            assert!((p[2] - 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-14);
            assert!((p[4] - (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0).abs() < 1e-14);
        }
    }

    #[test]
    fn p_at_zero_matches_recurrence() {
        for n in 0..=20 {
            assert!((legendre_at_zero(n) - legendre(n, 0.0)).abs() < 1e-14, "n={n}");
        }
        assert_eq!(funk_radon_weight(0), 2.0 * PI);
        assert!((funk_radon_weight(2) + PI).abs() < 1e-14);
    }

    #[test]
    fn addition_theorem() {
        // sum_m Y_lm(u) Y_lm(v) = (2l+1)/(4π) P_l(u·v)
        let u = [0.48, -0.6, 0.64];
        let v = [-0.36, 0.0, 0.933_059_483_314_5];
        let nv: f64 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let v = [v[0] / nv.sqrt(), v[1] / nv.sqrt(), v[2] / nv.sqrt()];
        let l_max = 12;
        let yu = real_sh_even(l_max, &u);
        let yv = real_sh_even(l_max, &v);
        let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        let degrees = coefficient_degrees(l_max);
        for l in (0..=l_max).step_by(2) {
            let s: f64 = (0..yu.len())
                .filter(|&i| degrees[i] == l)
                .map(|i| yu[i] * yv[i])
                .sum();
            let expect = (2 * l + 1) as f64 / (4.0 * PI) * legendre(l, dot);
            assert!((s - expect).abs() < 1e-12, "l={l}: {s} vs {expect}");
        }
    }

    #[test]
    fn basis_is_even() {
        let u = [0.2, 0.3, (1.0f64 - 0.13).sqrt()];
        let a = real_sh_even(8, &u);
        let b = real_sh_even(8, &[-u[0], -u[1], -u[2]]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_degree_rejected() {
        assert!(ShBasis::new(&[[0.0, 0.0, 1.0]], 3).is_err());
    }
}
