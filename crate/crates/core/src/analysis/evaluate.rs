//! Per-voxel comparison of a reconstruction with the ground truth.

use rayon::prelude::*;

use super::dti::{DtiModel, TensorFit};
use super::peaks::{find_peaks, peak_errors, PeakParams, PeakSet};
use super::{angular_error_unchecked, mean, nmse, quantile, sorted};
use crate::encoding::{Labels, Region};
use crate::error::{Error, Result};
use crate::qspace::QSpaceDesign;
use crate::ridgelets::{OdfPipeline, RidgeletDictionary, Tessellation};
use crate::volume::DwiVolumeSet;

/// Ridge weight of the coefficient fit inside the ODF chain.
pub const ODF_RIDGE: f64 = 1e-3;
/// Even SH degree of the ODF chain.
pub const ODF_SH_DEGREE: usize = 8;

/// Ground-truth references shared by every evaluation of one phantom.
pub struct Evaluator {
    truth: DwiVolumeSet,
    head: Vec<usize>,
    tissue: Vec<usize>,
    wm: Vec<usize>,
    /// Positions within `wm` of single-bundle voxels.
    single: Vec<usize>,
    dti: DtiModel,
    odf: OdfPipeline,
    peaks: PeakParams,
    truth_fits: Vec<TensorFit>,
    truth_peaks: Vec<PeakSet>,
}

/// Raw per-voxel metrics of one reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelMetrics {
    /// NMSE per head-mask voxel (in mask order); truth-zero voxels dropped.
    pub nmse_head: Vec<f64>,
    /// NMSE per non-CSF tissue voxel.
    pub nmse_tissue: Vec<f64>,
    /// FA per white-matter voxel.
    pub fa: Vec<f64>,
    /// FA minus truth FA per white-matter voxel.
    pub fa_error: Vec<f64>,
    /// Principal-direction error per single-bundle voxel, degrees.
    pub dti_error: Vec<f64>,
    /// ODF peak error per white-matter voxel, degrees.
    pub odf_error: Vec<f64>,
    /// Flagged white-matter voxels, percent.
    pub false_peak_pct: f64,
}

/// Summary statistics of [`VoxelMetrics`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<(String, String, f64)>,
}

impl Evaluator {
    pub fn new(
        truth: &DwiVolumeSet,
        labels: &Labels,
        design: &QSpaceDesign,
        dict: &RidgeletDictionary,
        peaks: PeakParams,
    ) -> Result<Self> {
        if labels.dims != truth.dims() {
            return Err(Error::Shape(format!(
                "labels {:?} and truth {:?} differ",
                labels.dims,
                truth.dims()
            )));
        }
        if design.n_q() != truth.n_q() || dict.n_q() != truth.n_q() {
            return Err(Error::Shape(format!(
                "truth has {} q-volumes, design {}, dictionary {}",
                truth.n_q(),
                design.n_q(),
                dict.n_q()
            )));
        }
        let wm = labels.white_matter().indices();
        let single = wm
            .iter()
            .enumerate()
            .filter(|(_, &v)| matches!(labels.regions[v], Region::BundleX | Region::BundleZ))
            .map(|(i, _)| i)
            .collect();
        let dti = DtiModel::new(design)?;
        let odf = OdfPipeline::new(dict, Tessellation::default_odf(), ODF_SH_DEGREE, ODF_RIDGE)?;
        let mut ev = Self {
            truth: truth.clone(),
            head: labels.head().indices(),
            tissue: labels.tissue().indices(),
            wm,
            single,
            dti,
            odf,
            peaks,
            truth_fits: Vec::new(),
            truth_peaks: Vec::new(),
        };
        let (fits, peaks) = ev.wm_models(truth)?;
        ev.truth_fits = fits;
        ev.truth_peaks = peaks;
        Ok(ev)
    }

    pub fn head_voxels(&self) -> &[usize] {
        &self.head
    }

    pub fn wm_voxels(&self) -> &[usize] {
        &self.wm
    }

    pub fn truth_fits(&self) -> &[TensorFit] {
        &self.truth_fits
    }

    pub fn truth_peaks(&self) -> &[PeakSet] {
        &self.truth_peaks
    }

    pub fn odf_pipeline(&self) -> &OdfPipeline {
        &self.odf
    }

    fn wm_models(&self, s: &DwiVolumeSet) -> Result<(Vec<TensorFit>, Vec<PeakSet>)> {
        let tess = self.odf.tessellation();
        let out: Vec<Result<(TensorFit, PeakSet)>> = self
            .wm
            .par_iter()
            .map(|&v| {
                let sig = s.voxel_signal(v);
                let fit = self.dti.fit(&sig)?;
                let peaks = find_peaks(&self.odf.odf(&sig), tess, &self.peaks);
                Ok((fit, peaks))
            })
            .collect();
        let mut fits = Vec::with_capacity(out.len());
        let mut peaks = Vec::with_capacity(out.len());
        for r in out {
            let (f, p) = r?;
            fits.push(f);
            peaks.push(p);
        }
        Ok((fits, peaks))
    }

    fn nmse_over(&self, recon: &DwiVolumeSet, voxels: &[usize]) -> Vec<f64> {
        voxels
            .iter()
            .filter_map(|&v| nmse(&recon.voxel_signal(v), &self.truth.voxel_signal(v)))
            .collect()
    }

    /// NMSE over the head mask as a one-volume map (0 outside).
    pub fn nmse_map(&self, recon: &DwiVolumeSet) -> Result<DwiVolumeSet> {
        let mut map = recon.zeros_like(1);
        for &v in &self.head {
            if let Some(e) = nmse(&recon.voxel_signal(v), &self.truth.voxel_signal(v)) {
                map.values_mut()[v] = e;
            }
        }
        Ok(map)
    }

    pub fn evaluate(&self, recon: &DwiVolumeSet) -> Result<VoxelMetrics> {
        if recon.dims() != self.truth.dims() || recon.n_q() != self.truth.n_q() {
            return Err(Error::Shape(format!(
                "reconstruction {:?} x {} vs truth {:?} x {}",
                recon.dims(),
                recon.n_q(),
                self.truth.dims(),
                self.truth.n_q()
            )));
        }
        let (fits, peaks) = self.wm_models(recon)?;
        let fa: Vec<f64> = fits.iter().map(|f| f.fa).collect();
        let fa_error = fits
            .iter()
            .zip(&self.truth_fits)
            .map(|(f, t)| f.fa - t.fa)
            .collect();
        let dti_error = self
            .single
            .iter()
            .map(|&i| angular_error_unchecked(&fits[i].principal, &self.truth_fits[i].principal))
            .collect();
        let mut odf_error = Vec::new();
        let mut flagged = 0usize;
        for (p, t) in peaks.iter().zip(&self.truth_peaks) {
            let c = peak_errors(p, t, self.peaks.match_threshold);
            if let Some(e) = c.mean_error {
                odf_error.push(e);
            }
            flagged += c.flagged as usize;
        }
        let false_peak_pct = if self.wm.is_empty() {
            0.0
        } else {
            100.0 * flagged as f64 / self.wm.len() as f64
        };
        Ok(VoxelMetrics {
            nmse_head: self.nmse_over(recon, &self.head),
            nmse_tissue: self.nmse_over(recon, &self.tissue),
            fa,
            fa_error,
            dti_error,
            odf_error,
            false_peak_pct,
        })
    }
}

impl VoxelMetrics {
    /// (metric, statistic, value) rows for a single reconstruction.
    pub fn summary(&self) -> EvalSummary {
        let mut rows = Vec::new();
        let mut dist = |name: &str, v: &[f64]| {
            let s = sorted(v);
            for (stat, p) in [("median", 0.5), ("q1", 0.25), ("q3", 0.75)] {
                if let Some(x) = quantile(&s, p) {
                    rows.push((name.to_string(), stat.to_string(), x));
                }
            }
            if let Some(m) = mean(v) {
                rows.push((name.to_string(), "mean".to_string(), m));
            }
        };
        dist("nmse_head", &self.nmse_head);
        dist("nmse_tissue", &self.nmse_tissue);
        dist("fa_bias", &self.fa_error);
        dist("dti_angular_error", &self.dti_error);
        dist("odf_angular_error", &self.odf_error);
        rows.push(("false_peak_pct".into(), "value".into(), self.false_peak_pct));
        EvalSummary { rows }
    }
}
