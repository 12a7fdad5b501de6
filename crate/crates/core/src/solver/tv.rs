//! Isotropic 3-D total variation and its proximal operator.
//!
//! Forward differences with Neumann boundaries (the difference across the
//! last slice is zero); the divergence is the negative adjoint.

use rayon::prelude::*;

/// Dual step of the projection iteration; ‖div‖² ≤ 12 in 3-D.
pub const TV_STEP: f64 = 1.0 / 12.0;

fn gradient(u: &[f64], dims: [usize; 3], g: &mut [f64]) {
    let [nx, ny, nz] = dims;
    let n = u.len();
    let plane = nx * ny;
    let (gx, rest) = g.split_at_mut(n);
    let (gy, gz) = rest.split_at_mut(n);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * y + plane * z;
                gx[i] = if x + 1 < nx { u[i + 1] - u[i] } else { 0.0 };
                gy[i] = if y + 1 < ny { u[i + nx] - u[i] } else { 0.0 };
                gz[i] = if z + 1 < nz { u[i + plane] - u[i] } else { 0.0 };
            }
        }
    }
}

fn divergence(p: &[f64], dims: [usize; 3], out: &mut [f64]) {
    let [nx, ny, nz] = dims;
    let n = out.len();
    let plane = nx * ny;
    let (px, rest) = p.split_at(n);
    let (py, pz) = rest.split_at(n);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * y + plane * z;
                let mut d = 0.0;
                if x + 1 < nx {
                    d += px[i];
                }
                if x > 0 {
                    d -= px[i - 1];
                }
                if y + 1 < ny {
                    d += py[i];
                }
                if y > 0 {
                    d -= py[i - nx];
                }
                if z + 1 < nz {
                    d += pz[i];
                }
                if z > 0 {
                    d -= pz[i - plane];
                }
                out[i] = d;
            }
        }
    }
}

/// Σ_voxels |∇u| for one volume.
pub fn tv_seminorm(u: &[f64], dims: [usize; 3]) -> f64 {
    let n = u.len();
    let mut g = vec![0.0; 3 * n];
    gradient(u, dims, &mut g);
    (0..n)
        .map(|i| (g[i] * g[i] + g[n + i] * g[n + i] + g[2 * n + i] * g[2 * n + i]).sqrt())
        .sum()
}

/// argmin_u ½‖u − f‖² + θ·TV(u) by Chambolle's dual projection.
///
/// `dual` holds the 3·n dual field and is used as the starting point and
/// updated in place, so repeated calls can be warm-started.
pub fn tv_prox_volume(
    f: &[f64],
    dims: [usize; 3],
    theta: f64,
    iters: usize,
    dual: &mut [f64],
    out: &mut [f64],
) {
    let n = f.len();
    debug_assert_eq!(dual.len(), 3 * n);
    if theta == 0.0 {
        out.copy_from_slice(f);
        return;
    }
    let mut div = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut g = vec![0.0; 3 * n];
    for _ in 0..iters {
        divergence(dual, dims, &mut div);
        for i in 0..n {
            w[i] = div[i] - f[i] / theta;
        }
        gradient(&w, dims, &mut g);
        for i in 0..n {
            let (a, b, c) = (g[i], g[n + i], g[2 * n + i]);
            let denom = 1.0 + TV_STEP * (a * a + b * b + c * c).sqrt();
            dual[i] = (dual[i] + TV_STEP * a) / denom;
            dual[n + i] = (dual[n + i] + TV_STEP * b) / denom;
            dual[2 * n + i] = (dual[2 * n + i] + TV_STEP * c) / denom;
        }
    }
    divergence(dual, dims, &mut div);
    for i in 0..n {
        out[i] = f[i] - theta * div[i];
    }
}

/// Applies [`tv_prox_volume`] to every q-volume of a flat x..q array.
pub fn tv_prox(
    f: &[f64],
    dims: [usize; 3],
    theta: f64,
    iters: usize,
    dual: &mut [f64],
    out: &mut [f64],
) {
    let n: usize = dims.iter().product();
    f.par_chunks(n)
        .zip(dual.par_chunks_mut(3 * n))
        .zip(out.par_chunks_mut(n))
        .for_each(|((fv, dv), ov)| tv_prox_volume(fv, dims, theta, iters, dv, ov));
}
