//! Reference implementations used as test oracles. Shared with the
//! acceptance suite of the command-line crate.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// RF profiles per round-robin group for each acceleration factor, written
/// out independently of the library's table.
pub const GROUP_SIZES: [&[usize]; 5] = [&[5], &[3, 2], &[2, 2, 1], &[2, 1, 1, 1], &[1, 1, 1, 1, 1]];

pub fn enumerated_total(n_q: usize, factor: usize) -> usize {
    (0..n_q).map(|j| GROUP_SIZES[factor - 1][j % factor]).sum()
}

/// Worst violation of the optimality conditions of
/// min (ρ/2)‖b − A c‖² + λ‖c‖₁.
pub fn kkt_residual(a: &DMatrix<f64>, b: &[f64], c: &[f64], lambda: f64, rho: f64) -> f64 {
    let cv = DVector::from_column_slice(c);
    let bv = DVector::from_column_slice(b);
    let g = a.transpose() * (a * &cv - bv) * rho;
    let mut worst: f64 = 0.0;
    for (gi, &ci) in g.iter().zip(c) {
        let v = if ci != 0.0 {
            (gi + lambda * ci.signum()).abs()
        } else {
            (gi.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// Forward differences, zero across the far boundary.
pub fn forward_gradient(u: &[f64], dims: [usize; 3]) -> Vec<[f64; 3]> {
    let [nx, ny, nz] = dims;
    let mut g = vec![[0.0; 3]; u.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = index(dims, x, y, z);
                if x + 1 < nx {
                    g[i][0] = u[index(dims, x + 1, y, z)] - u[i];
                }
                if y + 1 < ny {
                    g[i][1] = u[index(dims, x, y + 1, z)] - u[i];
                }
                if z + 1 < nz {
                    g[i][2] = u[index(dims, x, y, z + 1)] - u[i];
                }
            }
        }
    }
    g
}

/// Transpose of [`forward_gradient`].
pub fn forward_gradient_t(p: &[[f64; 3]], dims: [usize; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut d = vec![0.0; p.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = index(dims, x, y, z);
                if x + 1 < nx {
                    d[index(dims, x + 1, y, z)] += p[i][0];
                    d[i] -= p[i][0];
                }
                if y + 1 < ny {
                    d[index(dims, x, y + 1, z)] += p[i][1];
                    d[i] -= p[i][1];
                }
                if z + 1 < nz {
                    d[index(dims, x, y, z + 1)] += p[i][2];
                    d[i] -= p[i][2];
                }
            }
        }
    }
    d
}

/// ½‖u − f‖² + θ Σ|∇u|.
pub fn tv_objective(u: &[f64], f: &[f64], dims: [usize; 3], theta: f64) -> f64 {
    let fit = 0.5 * u.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let tv: f64 = forward_gradient(u, dims)
        .iter()
        .map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt())
        .sum();
    fit + theta * tv
}

/// Minimiser of [`tv_objective`] by primal-dual (Chambolle–Pock) iterations.
pub fn tv_reference(f: &[f64], dims: [usize; 3], theta: f64, iters: usize) -> Vec<f64> {
    // τσ‖∇‖² < 1 with ‖∇‖² ≤ 12 in 3-D
    let (tau, sigma) = (0.25, 0.99 / 12.0 / 0.25);
    let mut u = f.to_vec();
    let mut ubar = u.clone();
    let mut p = vec![[0.0; 3]; f.len()];
    for _ in 0..iters {
        for (pi, gi) in p.iter_mut().zip(forward_gradient(&ubar, dims)) {
            let q = [pi[0] + sigma * gi[0], pi[1] + sigma * gi[1], pi[2] + sigma * gi[2]];
            let s = ((q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt() / theta).max(1.0);
            *pi = [q[0] / s, q[1] / s, q[2] / s];
        }
        let d = forward_gradient_t(&p, dims);
        for i in 0..u.len() {
            let old = u[i];
            u[i] = (u[i] - tau * d[i] + tau * f[i]) / (1.0 + tau);
            ubar[i] = 2.0 * u[i] - old;
        }
    }
    u
}
