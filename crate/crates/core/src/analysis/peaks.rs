//! ODF peak extraction and matching.

use serde::{Deserialize, Serialize};

use super::angular_error_unchecked;
use crate::ridgelets::Tessellation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Degrees, axial.
    pub min_separation: f64,
    /// Fraction of the global maximum.
    pub rel_threshold: f64,
    pub max_peaks: usize,
    /// Degrees.
    pub match_threshold: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            min_separation: 25.0,
            rel_threshold: 0.4,
            max_peaks: 3,
            match_threshold: 20.0,
        }
    }
}

/// Peak directions (y ≥ 0 representatives) with descending amplitudes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeakSet {
    pub directions: Vec<[f64; 3]>,
    pub amplitudes: Vec<f64>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Local maxima of `odf` over the tessellation's neighbour graph, above
/// `rel_threshold`·max, accepted greedily by amplitude while keeping
/// `min_separation` from earlier peaks. Ties between neighbours go to the
/// lower vertex index.
pub fn find_peaks(odf: &[f64], tess: &Tessellation, params: &PeakParams) -> PeakSet {
    let max = odf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) || odf.iter().all(|&v| v == odf[0]) {
        return PeakSet::default();
    }
    let floor = params.rel_threshold * max;
    let mut candidates: Vec<usize> = (0..odf.len())
        .filter(|&v| {
            odf[v] >= floor
                && tess.neighbors(v).iter().all(|&n| odf[v] > odf[n] || (odf[v] == odf[n] && v < n))
        })
        .collect();
    candidates.sort_by(|&a, &b| odf[b].total_cmp(&odf[a]).then(a.cmp(&b)));
    let mut out = PeakSet::default();
    for v in candidates {
        if out.len() == params.max_peaks {
            break;
        }
        let dir = tess.vertices()[v];
        let far = out
            .directions
            .iter()
            .all(|p| angular_error_unchecked(p, &dir) > params.min_separation);
        if far {
            out.directions.push(super::dti::canonical_axis(dir));
            out.amplitudes.push(odf[v]);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakComparison {
    /// Mean over truth peaks of the angle to the nearest reconstructed peak
    /// (90° when nothing was reconstructed); `None` without truth peaks.
    pub mean_error: Option<f64>,
    /// A false or a missing peak.
    pub flagged: bool,
}

pub fn peak_errors(recon: &PeakSet, truth: &PeakSet, match_threshold: f64) -> PeakComparison {
    let nearest = |p: &[f64; 3], set: &PeakSet| {
        set.directions
            .iter()
            .map(|q| angular_error_unchecked(p, q))
            .fold(f64::INFINITY, f64::min)
    };
    let errors: Vec<f64> = truth
        .directions
        .iter()
        .map(|t| nearest(t, recon).min(90.0))
        .collect();
    let missing = errors.iter().any(|&e| e > match_threshold);
    let false_peak = recon
        .directions
        .iter()
        .any(|r| nearest(r, truth) > match_threshold);
    PeakComparison {
        mean_error: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        flagged: missing || false_peak,
    }
}
