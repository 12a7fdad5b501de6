//! Funk–Radon ODFs through an even spherical-harmonic fit.

use nalgebra::{DMatrix, DVector};

use super::sh::{coefficient_degrees, funk_radon_weight, ShBasis};
use super::tessellation::Tessellation;
use super::{RidgeFit, RidgeletDictionary};
use crate::error::{Error, Result};

/// Minimum tessellation size accepted for ODF evaluation.
pub const MIN_TESSELLATION: usize = 100;

/// Linear map from a signal sampled on dense directions to the raw
/// (unnormalised) ODF on a tessellation.
#[derive(Clone, Debug)]
pub struct OdfEngine {
    operator: DMatrix<f64>,
    n_samples: usize,
}

impl OdfEngine {
    pub fn new(samples: &ShBasis, tessellation: &Tessellation) -> Result<Self> {
        if tessellation.len() < MIN_TESSELLATION {
            return Err(Error::invalid(format!(
                "tessellation of {} vertices is too coarse (need {MIN_TESSELLATION})",
                tessellation.len()
            )));
        }
        let fit = samples.fit_operator()?;
        let degree = samples.degree();
        let eval = ShBasis::new(tessellation.vertices(), degree)?;
        let frt = DMatrix::from_diagonal(&DVector::from_iterator(
            fit.nrows(),
            coefficient_degrees(degree).into_iter().map(funk_radon_weight),
        ));
        Ok(Self {
            operator: eval.matrix() * frt * fit,
            n_samples: samples.matrix().nrows(),
        })
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn raw(&self, signal: &[f64]) -> Result<Vec<f64>> {
        if signal.len() != self.n_samples {
            return Err(Error::Shape(format!(
                "{} signal samples for an ODF engine built on {}",
                signal.len(),
                self.n_samples
            )));
        }
        Ok((&self.operator * DVector::from_column_slice(signal))
            .as_slice()
            .to_vec())
    }
}

/// Min-max normalisation to [0, 1]. A flat input maps to all zeros.
pub fn min_max_normalize(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    values.iter_mut().for_each(|v| *v = (*v - lo) / span);
}

/// ODF on the tessellation from a signal sampled on the engine's dense
/// directions, min-max normalised.
pub fn odf_from_signal(signal: &[f64], engine: &OdfEngine) -> Result<Vec<f64>> {
    let mut odf = engine.raw(signal)?;
    min_max_normalize(&mut odf);
    Ok(odf)
}

/// Full per-voxel ODF chain for acquired data: ridge fit of ridgelet
/// coefficients, evaluation on the dense hemisphere, SH fit, Funk–Radon
/// weighting and evaluation on the tessellation. All stages are linear, so
/// the chain is stored as one N_tess × N_q matrix.
#[derive(Clone, Debug)]
pub struct OdfPipeline {
    tessellation: Tessellation,
    operator: DMatrix<f64>,
}

impl OdfPipeline {
    pub fn new(
        dict: &RidgeletDictionary,
        tessellation: Tessellation,
        sh_degree: usize,
        ridge: f64,
    ) -> Result<Self> {
        if dict.orientations().is_empty() {
            return Err(Error::invalid(
                "ODF pipeline needs a dictionary that can be evaluated off-design",
            ));
        }
        let dense = tessellation.hemisphere_vertices();
        let engine = OdfEngine::new(&ShBasis::new(&dense, sh_degree)?, &tessellation)?;
        let fit = RidgeFit::new(dict, ridge)?;
        let operator = engine.operator() * dict.evaluate(&dense) * fit.operator();
        Ok(Self {
            tessellation,
            operator,
        })
    }

    pub fn tessellation(&self) -> &Tessellation {
        &self.tessellation
    }

    pub fn n_q(&self) -> usize {
        self.operator.ncols()
    }

    /// Normalised ODF on the tessellation.
    pub fn odf(&self, signal: &[f64]) -> Vec<f64> {
        let mut odf = (&self.operator * DVector::from_column_slice(signal))
            .as_slice()
            .to_vec();
        min_max_normalize(&mut odf);
        odf
    }
}
