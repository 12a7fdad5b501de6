//! RF-slab encoding forward model, noise and the synthetic phantom.
//!
//! A thick slice `b` of encoding `k` mixes the AF thin slices of slab `b`
//! with the weights of row `k` of the encoding basis:
//!
//! ```text
//! y_k(x, y, b, q) = Σ_a B[k, a] · s(x, y, b·AF + a, q)
//! ```

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qspace::{QSpaceDesign, SamplingScheme};
use crate::volume::{DwiVolumeSet, Mask};

/// AF × AF slab-encoding matrix; row k holds profile k's thin-slice weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingBasis {
    pub af: usize,
    pub matrix: Vec<Vec<f64>>,
}

impl EncodingBasis {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let af = matrix.len();
        if af == 0 || matrix.iter().any(|r| r.len() != af) {
            return Err(Error::invalid("encoding basis must be a non-empty square matrix"));
        }
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("encoding basis has non-finite entries"));
        }
        let basis = Self { af, matrix };
        if basis.to_dmatrix().determinant().abs() < 1e-12 {
            return Err(Error::invalid("encoding basis is singular"));
        }
        Ok(basis)
    }

    /// Identity basis (no slab encoding).
    pub fn identity(af: usize) -> Self {
        let matrix = (0..af)
            .map(|i| (0..af).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { af, matrix }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.matrix[k]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.af, self.af, |i, j| self.matrix[i][j])
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.to_dmatrix().singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// J − 2I: every profile excites the whole slab with one thin slice
/// phase-inverted.
pub fn default_basis(af: usize) -> Result<EncodingBasis> {
    if af < 2 {
        return Err(Error::invalid(format!("slab factor {af} must be >= 2")));
    }
    if af == 2 {
        // J − 2I = [[-1, 1], [1, -1]] has determinant 0
        return Err(Error::invalid("singular default basis for af = 2"));
    }
    let matrix = (0..af)
        .map(|i| (0..af).map(|j| if i == j { -1.0 } else { 1.0 }).collect())
        .collect();
    EncodingBasis::new(matrix)
}

fn check_slabs(dims: [usize; 3], af: usize) -> Result<usize> {
    if !dims[2].is_multiple_of(af) {
        return Err(Error::invalid(format!(
            "n_z = {} is not divisible by the slab factor {af}",
            dims[2]
        )));
    }
    Ok(dims[2] / af)
}

/// Thick-slice set of encoding `k` (0-based) for every q-volume of `s`.
pub fn downsample(s: &DwiVolumeSet, basis: &EncodingBasis, k: usize) -> Result<DwiVolumeSet> {
    let af = basis.af;
    if k >= af {
        return Err(Error::invalid(format!("RF index {k} out of range 0..{af}")));
    }
    let [nx, ny, _] = s.dims();
    let n_slabs = check_slabs(s.dims(), af)?;
    let row = basis.row(k);
    let plane = nx * ny;
    let mut out = DwiVolumeSet::zeros([nx, ny, n_slabs], s.voxel_size(), s.n_q())?;
    let thick_len = plane * n_slabs;
    out.values_mut()
        .par_chunks_mut(thick_len)
        .enumerate()
        .for_each(|(q, dst)| {
            let src = s.q_volume(q);
            for b in 0..n_slabs {
                let d = &mut dst[b * plane..(b + 1) * plane];
                for (a, &w) in row.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let z = b * af + a;
                    let sp = &src[z * plane..(z + 1) * plane];
                    for (o, &v) in d.iter_mut().zip(sp) {
                        *o += w * v;
                    }
                }
            }
        });
    Ok(out)
}

/// Adjoint of [`downsample`]: spreads B[k, a]·y(b) back to thin slice a of
/// slab b.
pub fn downsample_adjoint(
    y: &DwiVolumeSet,
    basis: &EncodingBasis,
    k: usize,
) -> Result<DwiVolumeSet> {
    let af = basis.af;
    if k >= af {
        return Err(Error::invalid(format!("RF index {k} out of range 0..{af}")));
    }
    let [nx, ny, n_slabs] = y.dims();
    let row = basis.row(k);
    let plane = nx * ny;
    let mut out = DwiVolumeSet::zeros([nx, ny, n_slabs * af], y.voxel_size(), y.n_q())?;
    out.values_mut()
        .par_chunks_mut(plane * n_slabs * af)
        .enumerate()
        .for_each(|(q, dst)| {
            let src = y.q_volume(q);
            for b in 0..n_slabs {
                let sp = &src[b * plane..(b + 1) * plane];
                for (a, &w) in row.iter().enumerate() {
                    let z = b * af + a;
                    for (o, &v) in dst[z * plane..(z + 1) * plane].iter_mut().zip(sp) {
                        *o = w * v;
                    }
                }
            }
        });
    Ok(out)
}

/// Gaussian noise settings. `target_snr = ∞` disables noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub target_snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(target_snr: f64, seed: u64) -> Result<Self> {
        if !(target_snr > 0.0) {
            return Err(Error::invalid(format!("target SNR {target_snr} must be > 0")));
        }
        Ok(Self { target_snr, seed })
    }

    pub fn noiseless() -> Self {
        Self {
            target_snr: f64::INFINITY,
            seed: 0,
        }
    }
}

/// One RF profile's acquired thick-slice set and the q-indices it holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition {
    pub rf_index: usize,
    pub q_indices: Vec<usize>,
    pub data: DwiVolumeSet,
}

/// Head mask of a b0-normalised set: voxels with any non-zero signal.
pub fn support_mask(s: &DwiVolumeSet) -> Mask {
    let n = s.n_voxels();
    let mut inside = vec![false; n];
    for q in 0..s.n_q() {
        for (m, &v) in inside.iter_mut().zip(s.q_volume(q)) {
            *m |= v != 0.0;
        }
    }
    Mask::new(s.dims(), inside).expect("mask dims match the volume")
}

/// Spatial mean of |thick b0| under encoding 0 over thick voxels whose
/// slab intersects the head mask. The b0 image is 1 inside the mask.
pub fn thick_b0_level(mask: &Mask, basis: &EncodingBasis) -> Result<f64> {
    let b0 = DwiVolumeSet::from_values(
        mask.dims(),
        [1.0; 3],
        1,
        mask.as_slice().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    )?;
    let thick = downsample(&b0, basis, 0)?;
    let [nx, ny, n_slabs] = thick.dims();
    let plane = nx * ny;
    let mut sum = 0.0;
    let mut count = 0usize;
    for b in 0..n_slabs {
        for p in 0..plane {
            let touched = (0..basis.af).any(|a| mask.contains(p + (b * basis.af + a) * plane));
            if touched {
                sum += thick.values()[p + b * plane].abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("head mask is empty; cannot set the noise level"));
    }
    Ok(sum / count as f64)
}

/// Noise standard deviation for a target SNR in the thick-slice b0 image.
pub fn noise_sigma(s: &DwiVolumeSet, basis: &EncodingBasis, snr: f64) -> Result<f64> {
    if snr.is_infinite() {
        return Ok(0.0);
    }
    Ok(thick_b0_level(&support_mask(s), basis)? / snr)
}

fn add_noise(volume: &mut [f64], sigma: f64, seed: u64, stream: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for v in volume {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * n;
    }
}

const HR_STREAM_BASE: u64 = 1 << 40;

/// Y_k = D_k S Ω_k + η_k for every RF profile of the scheme.
///
/// Noise of q-volume `i` of profile `k` comes from ChaCha stream
/// `k·2³² + i`, so results do not depend on thread count.
pub fn simulate_acquisition(
    s: &DwiVolumeSet,
    basis: &EncodingBasis,
    scheme: &SamplingScheme,
    noise: &NoiseSpec,
) -> Result<Vec<Acquisition>> {
    if scheme.n_rf != basis.af {
        return Err(Error::invalid(format!(
            "scheme has {} RF profiles but the basis has {}",
            scheme.n_rf, basis.af
        )));
    }
    scheme.validate(s.n_q())?;
    let sigma = noise_sigma(s, basis, noise.target_snr)?;
    let mut out = Vec::with_capacity(scheme.n_rf);
    for (k, q_indices) in scheme.assignments.iter().enumerate() {
        let mut data = downsample(&s.select_q(q_indices)?, basis, k)?;
        let len = data.n_voxels();
        data.values_mut()
            .par_chunks_mut(len)
            .enumerate()
            .for_each(|(i, vol)| add_noise(vol, sigma, noise.seed, ((k as u64) << 32) + i as u64));
        out.push(Acquisition {
            rf_index: k,
            q_indices: q_indices.clone(),
            data,
        });
    }
    Ok(out)
}

/// Direct thin-slice acquisition: full q-space, no slab encoding, noise
/// `sigma` per sample.
pub fn simulate_hr(s: &DwiVolumeSet, sigma: f64, seed: u64) -> DwiVolumeSet {
    let mut out = s.clone();
    let len = out.n_voxels();
    out.values_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(j, vol)| add_noise(vol, sigma, seed, HR_STREAM_BASE + j as u64));
    out
}

/// Tissue classes of the phantom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Region {
    Background = 0,
    Csf = 1,
    GreyMatter = 2,
    BundleX = 3,
    BundleZ = 4,
    Crossing = 5,
}

impl Region {
    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Region::Background,
            1 => Region::Csf,
            2 => Region::GreyMatter,
            3 => Region::BundleX,
            4 => Region::BundleZ,
            5 => Region::Crossing,
            _ => return Err(Error::invalid(format!("unknown region label {code}"))),
        })
    }

    pub fn is_white_matter(self) -> bool {
        matches!(self, Region::BundleX | Region::BundleZ | Region::Crossing)
    }

    pub fn is_tissue(self) -> bool {
        !matches!(self, Region::Background | Region::Csf)
    }
}

/// Per-voxel region labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    pub dims: [usize; 3],
    pub regions: Vec<Region>,
}

impl Labels {
    pub fn mask_where(&self, pred: impl Fn(Region) -> bool) -> Mask {
        Mask::new(self.dims, self.regions.iter().map(|&r| pred(r)).collect())
            .expect("label dims are consistent")
    }

    pub fn head(&self) -> Mask {
        self.mask_where(|r| r != Region::Background)
    }

    pub fn tissue(&self) -> Mask {
        self.mask_where(Region::is_tissue)
    }

    pub fn white_matter(&self) -> Mask {
        self.mask_where(Region::is_white_matter)
    }

    pub fn to_volume(&self, voxel_size: [f64; 3]) -> Result<DwiVolumeSet> {
        DwiVolumeSet::from_values(
            self.dims,
            voxel_size,
            1,
            self.regions.iter().map(|&r| r as u8 as f64).collect(),
        )
    }

    pub fn from_volume(v: &DwiVolumeSet) -> Result<Self> {
        if v.n_q() != 1 {
            return Err(Error::invalid("label volume must have a single q-volume"));
        }
        let regions = v
            .values()
            .iter()
            .map(|&x| {
                if x.fract() != 0.0 || !(0.0..=255.0).contains(&x) {
                    return Err(Error::invalid(format!("label value {x} is not a code")));
                }
                Region::from_code(x as u8)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            dims: v.dims(),
            regions,
        })
    }
}

/// Diffusivities of the phantom compartments, mm²/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub csf_diffusivity: f64,
    pub gm_diffusivity: f64,
    pub wm_axial: f64,
    pub wm_radial: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            csf_diffusivity: 3.0e-3,
            gm_diffusivity: 0.8e-3,
            wm_axial: 1.7e-3,
            wm_radial: 0.3e-3,
        }
    }
}

/// exp(−b qᵀDq) for an axially symmetric tensor along unit `axis`.
pub fn stick_tensor_signal(q: &[f64; 3], axis: &[f64; 3], axial: f64, radial: f64, b: f64) -> f64 {
    let c = q[0] * axis[0] + q[1] * axis[1] + q[2] * axis[2];
    (-b * (radial + (axial - radial) * c * c)).exp()
}

/// Ground-truth set and labels: CSF-like core, grey-matter ellipsoid and two
/// orthogonal white-matter bundles (along x and z) crossing at the centre.
pub fn make_phantom(
    dims: [usize; 3],
    voxel_size: [f64; 3],
    design: &QSpaceDesign,
) -> Result<(DwiVolumeSet, Labels)> {
    make_phantom_with(dims, voxel_size, design, &PhantomParams::default())
}

pub fn make_phantom_with(
    dims: [usize; 3],
    voxel_size: [f64; 3],
    design: &QSpaceDesign,
    params: &PhantomParams,
) -> Result<(DwiVolumeSet, Labels)> {
    if dims[0] < 16 || dims[1] < 16 || dims[2] == 0 {
        return Err(Error::invalid(format!(
            "phantom dims {dims:?} too small (need at least 16 x 16 in-plane)"
        )));
    }
    let coord = |i: usize, n: usize| (i as f64 + 0.5 - n as f64 / 2.0) / (n as f64 / 2.0);
    let mut regions = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let u = [coord(x, dims[0]), coord(y, dims[1]), coord(z, dims[2])];
                let r2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
                let region = if r2 > 0.81 {
                    Region::Background
                } else {
                    let in_x = u[1].abs() <= 0.3 && u[2].abs() <= 0.4;
                    let in_z = u[0].abs() <= 0.3 && u[1].abs() <= 0.3;
                    let core = (u[0] / 0.35).powi(2)
                        + ((u[1] - 0.55) / 0.15).powi(2)
                        + (u[2] / 0.35).powi(2);
                    match (in_x, in_z) {
                        (true, true) => Region::Crossing,
                        (true, false) => Region::BundleX,
                        (false, true) => Region::BundleZ,
                        _ if core <= 1.0 => Region::Csf,
                        _ => Region::GreyMatter,
                    }
                };
                regions.push(region);
            }
        }
    }

    let b = design.bvalue();
    let ex = [1.0, 0.0, 0.0];
    let ez = [0.0, 0.0, 1.0];
    let signal = |region: Region, q: &[f64; 3]| -> f64 {
        let (ax, rad) = (params.wm_axial, params.wm_radial);
        match region {
            Region::Background => 0.0,
            Region::Csf => (-b * params.csf_diffusivity).exp(),
            Region::GreyMatter => (-b * params.gm_diffusivity).exp(),
            Region::BundleX => stick_tensor_signal(q, &ex, ax, rad, b),
            Region::BundleZ => stick_tensor_signal(q, &ez, ax, rad, b),
            Region::Crossing => {
                0.5 * stick_tensor_signal(q, &ex, ax, rad, b)
                    + 0.5 * stick_tensor_signal(q, &ez, ax, rad, b)
            }
        }
    };

    let n = regions.len();
    let mut values = vec![0.0; n * design.n_q()];
    for (j, q) in design.directions().iter().enumerate() {
        for (v, &r) in values[j * n..(j + 1) * n].iter_mut().zip(&regions) {
            *v = signal(r, q);
        }
    }
    Ok((
        DwiVolumeSet::from_values(dims, voxel_size, design.n_q(), values)?,
        Labels { dims, regions },
    ))
}
