//! Validation metrics: NMSE, tensor fits, ODF peaks and the Monte-Carlo
//! study.

mod dti;
mod evaluate;
mod montecarlo;
mod peaks;

pub use dti::{canonical_axis, fit_dti, fractional_anisotropy, DtiModel, TensorFit, SIGNAL_FLOOR};
pub use evaluate::{EvalSummary, Evaluator, VoxelMetrics};
pub use montecarlo::{
    hr_sigma, run_monte_carlo, McConfig, McRow, McSummary, RealizationRecord, HR_LABEL, HR_SNR_RATIO,
    MC_CSV_HEADER,
};
pub use peaks::{find_peaks, peak_errors, PeakComparison, PeakParams, PeakSet};

use crate::error::{Error, Result};

/// ‖ŝ − s‖²/‖s‖², or `None` when the truth vanishes.
pub fn nmse(estimate: &[f64], truth: &[f64]) -> Option<f64> {
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return None;
    }
    let num: f64 = estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
    Some(num / den)
}

fn check_unit(u: &[f64; 3]) -> Result<()> {
    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("direction {u:?} has norm {n}, expected 1")));
    }
    Ok(())
}

pub(crate) fn angular_error_unchecked(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    let d = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).abs().clamp(0.0, 1.0);
    d.acos().to_degrees()
}

/// Axial angle in degrees between unit vectors: arccos|u·v|.
pub fn angular_error(u: &[f64; 3], v: &[f64; 3]) -> Result<f64> {
    check_unit(u)?;
    check_unit(v)?;
    Ok(angular_error_unchecked(u, v))
}

/// Linear-interpolation quantile of ascending `sorted`; `None` if empty.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(&sorted(values), 0.5)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation (n − 1); `None` below two values.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}
