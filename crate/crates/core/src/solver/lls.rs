//! Slab-wise least-squares systems.
//!
//! The data term couples only the AF thin slices of one slab for one
//! (x, y, q). For direction j the normal matrix is Σ_{k∈K_j} b_kᵀb_k, where
//! K_j are the profiles that encoded j, so every solve is AF × AF and only
//! one factorisation per distinct K_j is needed.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::encoding::{Acquisition, EncodingBasis};
use crate::error::{Error, Result};
use crate::qspace::SamplingScheme;
use crate::volume::DwiVolumeSet;

#[derive(Clone, Debug)]
pub struct SlabOperator {
    basis: EncodingBasis,
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    grams: Vec<DMatrix<f64>>,
}

/// Inverses of (gram + shift·I), one per profile group.
#[derive(Clone, Debug)]
pub struct SlabFactors {
    shift: f64,
    inverses: Vec<Vec<f64>>,
}

impl SlabFactors {
    pub fn shift(&self) -> f64 {
        self.shift
    }
}

impl SlabOperator {
    pub fn new(basis: &EncodingBasis, scheme: &SamplingScheme, n_q: usize) -> Result<Self> {
        if scheme.n_rf != basis.af {
            return Err(Error::InvalidScheme(format!(
                "scheme has {} RF profiles, basis has {}",
                scheme.n_rf, basis.af
            )));
        }
        scheme.validate(n_q)?;
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of = Vec::with_capacity(n_q);
        for j in 0..n_q {
            let ks = scheme.profiles_for(j);
            let g = match groups.iter().position(|g| *g == ks) {
                Some(g) => g,
                None => {
                    groups.push(ks);
                    groups.len() - 1
                }
            };
            group_of.push(g);
        }
        let b = basis.to_dmatrix();
        let grams = groups
            .iter()
            .map(|ks| {
                let mut g = DMatrix::zeros(basis.af, basis.af);
                for &k in ks {
                    let row = b.row(k);
                    g += row.transpose() * row;
                }
                g
            })
            .collect();
        Ok(Self {
            basis: basis.clone(),
            groups,
            group_of,
            grams,
        })
    }

    pub fn af(&self) -> usize {
        self.basis.af
    }

    pub fn n_q(&self) -> usize {
        self.group_of.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, j: usize) -> usize {
        self.group_of[j]
    }

    pub fn gram(&self, group: usize) -> &DMatrix<f64> {
        &self.grams[group]
    }

    pub fn factor(&self, shift: f64) -> Result<SlabFactors> {
        let af = self.af();
        let inverses = self
            .grams
            .iter()
            .enumerate()
            .map(|(g, gram)| {
                let mut m = gram.clone();
                for i in 0..af {
                    m[(i, i)] += shift;
                }
                let chol = m.cholesky().ok_or_else(|| Error::Numerical {
                    stage: "lls",
                    detail: format!(
                        "slab system of profile group {:?} is singular (shift {shift})",
                        self.groups[g]
                    ),
                })?;
                let inv = chol.inverse();
                // row-major for the per-column products
                Ok((0..af * af).map(|i| inv[(i / af, i % af)]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(SlabFactors { shift, inverses })
    }

    /// Σ_{k∈K_j} B_kᵀ y_k on the thin grid, one q-volume per design direction.
    pub fn data_rhs(&self, acquisitions: &[Acquisition], thin_dims: [usize; 3]) -> Result<DwiVolumeSet> {
        let af = self.af();
        let [nx, ny, nz] = thin_dims;
        if nz % af != 0 {
            return Err(Error::invalid(format!(
                "n_z = {nz} is not divisible by the slab factor {af}"
            )));
        }
        let n_slabs = nz / af;
        let plane = nx * ny;
        // (profile, position) pairs per direction, ascending profile
        let mut sources: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.n_q()];
        for acq in acquisitions {
            if acq.rf_index >= af {
                return Err(Error::invalid(format!("RF index {} out of range", acq.rf_index)));
            }
            if acq.data.dims() != [nx, ny, n_slabs] || acq.data.n_q() != acq.q_indices.len() {
                return Err(Error::Shape(format!(
                    "acquisition {} has dims {:?} x {} (expected {:?} x {})",
                    acq.rf_index,
                    acq.data.dims(),
                    acq.data.n_q(),
                    [nx, ny, n_slabs],
                    acq.q_indices.len()
                )));
            }
            for (pos, &j) in acq.q_indices.iter().enumerate() {
                if j >= self.n_q() {
                    return Err(Error::Shape(format!("q index {j} beyond design")));
                }
                sources[j].push((acq.rf_index, pos));
            }
        }
        for (j, src) in sources.iter_mut().enumerate() {
            src.sort_unstable();
            let ks: Vec<usize> = src.iter().map(|&(k, _)| k).collect();
            if ks != self.groups[self.group_of[j]] {
                return Err(Error::InvalidScheme(format!(
                    "direction {j} acquired by profiles {ks:?}, scheme expects {:?}",
                    self.groups[self.group_of[j]]
                )));
            }
        }
        let voxel_size = acquisitions
            .first()
            .map_or([1.0; 3], |a| a.data.voxel_size());
        let mut out = DwiVolumeSet::zeros(thin_dims, voxel_size, self.n_q())?;
        let vol_len = plane * nz;
        out.values_mut()
            .par_chunks_mut(vol_len)
            .zip(sources.par_iter())
            .for_each(|(dst, src)| {
                for &(k, pos) in src {
                    let y = acquisitions
                        .iter()
                        .find(|a| a.rf_index == k)
                        .expect("source acquisition exists")
                        .data
                        .q_volume(pos);
                    let row = self.basis.row(k);
                    for b in 0..n_slabs {
                        let yb = &y[b * plane..(b + 1) * plane];
                        for (a, &w) in row.iter().enumerate() {
                            let z = b * af + a;
                            for (o, &v) in dst[z * plane..(z + 1) * plane].iter_mut().zip(yb) {
                                *o += w * v;
                            }
                        }
                    }
                }
            });
        Ok(out)
    }

    /// Solves (gram_{g(j)} + shift·I) s = rhs for every (x, y, slab, j).
    pub fn solve(&self, factors: &SlabFactors, rhs: &DwiVolumeSet) -> DwiVolumeSet {
        let af = self.af();
        let [nx, ny, nz] = rhs.dims();
        let plane = nx * ny;
        let n_slabs = nz / af;
        let mut out = rhs.zeros_like(rhs.n_q());
        let vol_len = plane * nz;
        out.values_mut()
            .par_chunks_mut(vol_len)
            .enumerate()
            .for_each(|(j, dst)| {
                let inv = &factors.inverses[self.group_of[j]];
                let src = rhs.q_volume(j);
                let mut col = vec![0.0; af];
                for b in 0..n_slabs {
                    for p in 0..plane {
                        for (a, c) in col.iter_mut().enumerate() {
                            *c = src[p + (b * af + a) * plane];
                        }
                        for a in 0..af {
                            let r = &inv[a * af..(a + 1) * af];
                            dst[p + (b * af + a) * plane] =
                                r.iter().zip(&col).map(|(x, y)| x * y).sum();
                        }
                    }
                }
            });
        out
    }

    /// (gram + shift·I) s applied to a thin-grid set; used to verify solves.
    pub fn apply(&self, shift: f64, s: &DwiVolumeSet) -> DwiVolumeSet {
        let af = self.af();
        let [nx, ny, nz] = s.dims();
        let plane = nx * ny;
        let mut out = s.zeros_like(s.n_q());
        for j in 0..s.n_q() {
            let g = &self.grams[self.group_of[j]];
            let src = s.q_volume(j);
            let dst = out.q_volume_mut(j);
            for b in 0..nz / af {
                for p in 0..plane {
                    for a in 0..af {
                        let mut acc = shift * src[p + (b * af + a) * plane];
                        for c in 0..af {
                            acc += g[(a, c)] * src[p + (b * af + c) * plane];
                        }
                        dst[p + (b * af + a) * plane] = acc;
                    }
                }
            }
        }
        out
    }
}

/// Conventional-gSlider style baseline: per slab column solves
/// (Σ_{k∈K_j} B_kᵀB_k + μI) s = Σ_{k∈K_j} B_kᵀ y_k.
pub fn tikhonov_init(
    acquisitions: &[Acquisition],
    basis: &EncodingBasis,
    scheme: &SamplingScheme,
    thin_dims: [usize; 3],
    n_q: usize,
    mu: f64,
) -> Result<DwiVolumeSet> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("Tikhonov weight {mu} must be > 0")));
    }
    let op = SlabOperator::new(basis, scheme, n_q)?;
    let rhs = op.data_rhs(acquisitions, thin_dims)?;
    Ok(op.solve(&op.factor(mu)?, &rhs))
}
