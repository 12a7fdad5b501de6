//! ℓ1-regularised coefficient fits, min_c (ρ/2)‖b − A c‖² + λ‖c‖₁, for
//! many voxels at once.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ridgelets::RidgeletDictionary;

/// Componentwise sign(v)·max(|v| − t, 0).
pub fn soft_threshold(v: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("threshold {t} must be >= 0")));
    }
    Ok(v.iter().map(|&x| shrink(x, t)).collect())
}

#[inline]
fn shrink(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpOptions {
    pub max_iters: usize,
    /// Per-voxel relative objective change that ends the iteration.
    pub tol: f64,
    pub chunk: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            chunk: 128,
        }
    }
}

/// Accelerated proximal-gradient solver with a cached Lipschitz constant.
///
/// Uses the monotone variant: a trial point that raises the objective is
/// not accepted, so the objective of the iterate never increases.
#[derive(Clone, Debug)]
pub struct BasisPursuit {
    a: DMatrix<f64>,
    at: DMatrix<f64>,
    norm_sq: f64,
}

/// Coefficients (M × n) and their synthesis A c (N_q × n).
#[derive(Clone, Debug)]
pub struct BpSolution {
    pub coefficients: DMatrix<f64>,
    pub synthesis: DMatrix<f64>,
    pub iterations: usize,
}

impl BasisPursuit {
    pub fn new(dict: &RidgeletDictionary) -> Self {
        let a = dict.matrix().clone();
        Self {
            at: a.transpose(),
            norm_sq: dict.spectral_norm_sq(),
            a,
        }
    }

    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Largest eigenvalue of AᵀA.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Solves one problem per column of `b`, warm-started from `c0`.
    pub fn solve(
        &self,
        b: &DMatrix<f64>,
        c0: &DMatrix<f64>,
        lambda: f64,
        rho: f64,
        opts: &BpOptions,
    ) -> Result<BpSolution> {
        let (nq, m) = self.a.shape();
        if b.nrows() != nq || c0.nrows() != m || c0.ncols() != b.ncols() {
            return Err(Error::Shape(format!(
                "BP with dictionary {nq}x{m}, data {}x{}, start {}x{}",
                b.nrows(),
                b.ncols(),
                c0.nrows(),
                c0.ncols()
            )));
        }
        if !(lambda >= 0.0) || !(rho > 0.0) {
            return Err(Error::invalid(format!(
                "BP needs lambda >= 0 and rho > 0 (got {lambda}, {rho})"
            )));
        }
        let n = b.ncols();
        let chunk = opts.chunk.max(1);
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        let parts: Vec<(DMatrix<f64>, DMatrix<f64>, usize)> = starts
            .par_iter()
            .map(|&s| {
                let w = chunk.min(n - s);
                let bc = b.columns(s, w).into_owned();
                let cc = c0.columns(s, w).into_owned();
                self.solve_chunk(&bc, cc, lambda, rho, opts)
            })
            .collect();
        let mut coefficients = DMatrix::zeros(m, n);
        let mut synthesis = DMatrix::zeros(nq, n);
        let mut iterations = 0;
        for (&s, (c, ac, it)) in starts.iter().zip(parts) {
            coefficients.columns_mut(s, c.ncols()).copy_from(&c);
            synthesis.columns_mut(s, ac.ncols()).copy_from(&ac);
            iterations = iterations.max(it);
        }
        Ok(BpSolution {
            coefficients,
            synthesis,
            iterations,
        })
    }

    fn objective(&self, resid_col: &[f64], c_col: &[f64], lambda: f64, rho: f64) -> f64 {
        let fit: f64 = resid_col.iter().map(|r| r * r).sum();
        let l1: f64 = c_col.iter().map(|c| c.abs()).sum();
        0.5 * rho * fit + lambda * l1
    }

    fn solve_chunk(
        &self,
        b: &DMatrix<f64>,
        mut x: DMatrix<f64>,
        lambda: f64,
        rho: f64,
        opts: &BpOptions,
    ) -> (DMatrix<f64>, DMatrix<f64>, usize) {
        let (nq, m) = self.a.shape();
        let w = b.ncols();
        let step = if self.norm_sq > 0.0 {
            1.0 / (rho * self.norm_sq)
        } else {
            0.0
        };
        let thresh = step * lambda;

        // Columns whose optimum is c = 0.
        let atb = &self.at * b;
        let mut active = vec![true; w];
        for (j, act) in active.iter_mut().enumerate() {
            let amax = atb.column(j).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if lambda >= rho * amax {
                *act = false;
                x.column_mut(j).fill(0.0);
            }
        }

        let mut ax = &self.a * &x;
        let mut f_x: Vec<f64> = (0..w)
            .map(|j| {
                let r: Vec<f64> = ax.column(j).iter().zip(b.column(j).iter()).map(|(p, q)| p - q).collect();
                self.objective(&r, x.column(j).as_slice(), lambda, rho)
            })
            .collect();
        let mut y = x.clone();
        let mut ay = ax.clone();
        let mut t = vec![1.0f64; w];
        let mut resid = DMatrix::zeros(nq, w);
        let mut grad = DMatrix::zeros(m, w);
        let mut z = DMatrix::zeros(m, w);
        let mut az = DMatrix::zeros(nq, w);
        let mut iters = 0;

        for _ in 0..opts.max_iters {
            if !active.iter().any(|&a| a) {
                break;
            }
            iters += 1;
            resid.copy_from(&ay);
            resid -= b;
            grad.gemm(rho, &self.at, &resid, 0.0);
            for j in 0..w {
                if !active[j] {
                    z.column_mut(j).copy_from(&x.column(j));
                    continue;
                }
                for i in 0..m {
                    z[(i, j)] = shrink(y[(i, j)] - step * grad[(i, j)], thresh);
                }
            }
            az.gemm(1.0, &self.a, &z, 0.0);
            for j in 0..w {
                if !active[j] {
                    continue;
                }
                let r: Vec<f64> = az.column(j).iter().zip(b.column(j).iter()).map(|(p, q)| p - q).collect();
                let f_z = self.objective(&r, z.column(j).as_slice(), lambda, rho);
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t[j] * t[j]).sqrt());
                let (beta_z, beta_x) = (t[j] / t_next, (t[j] - 1.0) / t_next);
                if f_z <= f_x[j] {
                    let change = f_x[j] - f_z;
                    // y = z + ((t−1)/t')(z − x)
                    for i in 0..m {
                        let (zi, xi) = (z[(i, j)], x[(i, j)]);
                        y[(i, j)] = zi + beta_x * (zi - xi);
                        x[(i, j)] = zi;
                    }
                    for i in 0..nq {
                        let (zi, xi) = (az[(i, j)], ax[(i, j)]);
                        ay[(i, j)] = zi + beta_x * (zi - xi);
                        ax[(i, j)] = zi;
                    }
                    let converged = change <= opts.tol * f_x[j].abs();
                    f_x[j] = f_z;
                    if converged {
                        active[j] = false;
                    }
                } else {
                    // y = x + (t/t')(z − x)
                    for i in 0..m {
                        y[(i, j)] = x[(i, j)] + beta_z * (z[(i, j)] - x[(i, j)]);
                    }
                    for i in 0..nq {
                        ay[(i, j)] = ax[(i, j)] + beta_z * (az[(i, j)] - ax[(i, j)]);
                    }
                }
                t[j] = t_next;
            }
        }
        (x, ax, iters)
    }
}
