use crate::error::{Error, Result};

/// Diffusion signal over a voxel grid and a list of q-space directions.
///
/// Values are stored x fastest, then y, then z, then q, which is also the
/// on-disk order. A single q-volume is therefore one contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct DwiVolumeSet {
    dims: [usize; 3],
    voxel_size: [f64; 3],
    n_q: usize,
    values: Vec<f64>,
}

impl DwiVolumeSet {
    pub fn zeros(dims: [usize; 3], voxel_size: [f64; 3], n_q: usize) -> Result<Self> {
        Self::from_values(dims, voxel_size, n_q, vec![0.0; dims.iter().product::<usize>() * n_q])
    }

    pub fn from_values(
        dims: [usize; 3],
        voxel_size: [f64; 3],
        n_q: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dims.contains(&0) || n_q == 0 {
            return Err(Error::invalid(format!(
                "volume dims {dims:?} and n_q {n_q} must be positive"
            )));
        }
        let expected = dims.iter().product::<usize>() * n_q;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "{} values for dims {dims:?} x {n_q} (expected {expected})",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at element {pos}")));
        }
        Ok(Self {
            dims,
            voxel_size,
            n_q,
            values,
        })
    }

    /// Same geometry, different q count, zero-filled.
    pub fn zeros_like(&self, n_q: usize) -> Self {
        Self {
            dims: self.dims,
            voxel_size: self.voxel_size,
            n_q,
            values: vec![0.0; self.n_voxels() * n_q],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn voxel_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize, q: usize) -> f64 {
        self.values[self.voxel_index(x, y, z) + self.n_voxels() * q]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, q: usize, v: f64) {
        let i = self.voxel_index(x, y, z) + self.n_voxels() * q;
        self.values[i] = v;
    }

    pub fn q_volume(&self, q: usize) -> &[f64] {
        let n = self.n_voxels();
        &self.values[q * n..(q + 1) * n]
    }

    pub fn q_volume_mut(&mut self, q: usize) -> &mut [f64] {
        let n = self.n_voxels();
        &mut self.values[q * n..(q + 1) * n]
    }

    /// Signal vector of one voxel (linear index) across all q.
    pub fn voxel_signal(&self, voxel: usize) -> Vec<f64> {
        let n = self.n_voxels();
        (0..self.n_q).map(|q| self.values[voxel + q * n]).collect()
    }

    pub fn set_voxel_signal(&mut self, voxel: usize, signal: &[f64]) {
        let n = self.n_voxels();
        for (q, &v) in signal.iter().enumerate() {
            self.values[voxel + q * n] = v;
        }
    }

    /// New set holding only the listed q-volumes, in the given order.
    pub fn select_q(&self, q_indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_voxels() * q_indices.len());
        for &q in q_indices {
            if q >= self.n_q {
                return Err(Error::invalid(format!("q index {q} >= n_q {}", self.n_q)));
            }
            values.extend_from_slice(self.q_volume(q));
        }
        Ok(Self {
            dims: self.dims,
            voxel_size: self.voxel_size,
            n_q: q_indices.len(),
            values,
        })
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims == other.dims && self.n_q == other.n_q
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Boolean voxel mask over a 3-D grid, same linear order as the volumes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    inside: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], inside: Vec<bool>) -> Result<Self> {
        if inside.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "mask of {} voxels for dims {dims:?}",
                inside.len()
            )));
        }
        Ok(Self { dims, inside })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            dims,
            inside: vec![true; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn contains(&self, voxel: usize) -> bool {
        self.inside[voxel]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.inside
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Linear indices of the voxels inside the mask, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.inside
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}
