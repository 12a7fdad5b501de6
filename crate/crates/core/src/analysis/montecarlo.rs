//! Repeated simulate → reconstruct → evaluate cycles per undersampling
//! scheme, plus the direct thin-slice (HR) baseline.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::evaluate::{Evaluator, VoxelMetrics};
use super::{mean, quantile, sorted, std_dev};
use crate::encoding::{simulate_acquisition, simulate_hr, EncodingBasis, NoiseSpec};
use crate::error::{Error, Result};
use crate::qspace::{make_scheme_for, Acceleration};
use crate::ridgelets::RidgeletDictionary;
use crate::solver::{reconstruct, ReconOptions, SolverConfig};
use crate::volume::{DwiVolumeSet, Mask};

pub const MC_CSV_HEADER: &str = "scheme,metric,statistic,value";

/// The HR baseline's SNR is this factor below the thick-slice SNR.
pub const HR_SNR_RATIO: f64 = 4.6;

pub const HR_LABEL: &str = "HR";

/// Noise level of the HR baseline for b0-normalised thin-slice data.
pub fn hr_sigma(snr: f64) -> f64 {
    if snr.is_infinite() {
        0.0
    } else {
        HR_SNR_RATIO / snr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub factors: Vec<usize>,
    pub include_hr: bool,
    pub n_mc: usize,
    pub snr: f64,
    pub seed: u64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mc < 2 {
            return Err(Error::invalid(format!("n_mc = {} must be >= 2", self.n_mc)));
        }
        if self.factors.is_empty() && !self.include_hr {
            return Err(Error::invalid("no schemes selected"));
        }
        for &f in &self.factors {
            Acceleration::from_factor(f)?;
        }
        if !(self.snr > 0.0) {
            return Err(Error::invalid(format!("SNR {} must be > 0", self.snr)));
        }
        Ok(())
    }

    /// Scheme labels in run order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.factors.iter().map(|f| format!("{f}X")).collect();
        if self.include_hr {
            out.push(HR_LABEL.into());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRow {
    pub scheme: String,
    pub metric: String,
    pub statistic: String,
    pub value: f64,
}

/// One simulate/reconstruct cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationRecord {
    pub scheme: String,
    pub index: usize,
    pub seed: u64,
    /// Outer iterations run; 0 for the HR baseline.
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McSummary {
    pub n_mc: usize,
    pub rows: Vec<McRow>,
    pub realizations: Vec<RealizationRecord>,
}

impl McSummary {
    pub fn get(&self, scheme: &str, metric: &str, statistic: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.metric == metric && r.statistic == statistic)
            .map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MC_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.scheme, r.metric, r.statistic, r.value);
        }
        out
    }
}

struct Aggregator<'a> {
    scheme: &'a str,
    rows: Vec<McRow>,
}

impl Aggregator<'_> {
    fn push(&mut self, metric: &str, statistic: &str, value: Option<f64>) {
        if let Some(value) = value {
            self.rows.push(McRow {
                scheme: self.scheme.to_string(),
                metric: metric.to_string(),
                statistic: statistic.to_string(),
                value,
            });
        }
    }

    fn distribution(&mut self, metric: &str, pooled: &[f64]) {
        let s = sorted(pooled);
        self.push(metric, "median", quantile(&s, 0.5));
        self.push(metric, "q1", quantile(&s, 0.25));
        self.push(metric, "q3", quantile(&s, 0.75));
        self.push(metric, "mean", mean(pooled));
    }
}

fn aggregate(scheme: &str, runs: &[VoxelMetrics]) -> Vec<McRow> {
    let mut agg = Aggregator {
        scheme,
        rows: Vec::new(),
    };
    agg.push("realizations", "count", Some(runs.len() as f64));
    let pool = |f: fn(&VoxelMetrics) -> &Vec<f64>| -> Vec<f64> {
        runs.iter().flat_map(|r| f(r).iter().copied()).collect()
    };
    agg.distribution("nmse_head", &pool(|r| &r.nmse_head));
    agg.distribution("nmse_tissue", &pool(|r| &r.nmse_tissue));

    // voxelwise over realizations, then median over the WM mask
    let n_wm = runs.first().map_or(0, |r| r.fa.len());
    let mut bias = Vec::with_capacity(n_wm);
    let mut spread = Vec::with_capacity(n_wm);
    for v in 0..n_wm {
        let err: Vec<f64> = runs.iter().map(|r| r.fa_error[v]).collect();
        let fa: Vec<f64> = runs.iter().map(|r| r.fa[v]).collect();
        bias.push(mean(&err).unwrap_or(0.0));
        spread.push(std_dev(&fa).unwrap_or(0.0));
    }
    let (bias_s, spread_s) = (sorted(&bias), sorted(&spread));
    agg.push("fa_bias", "median", quantile(&bias_s, 0.5));
    agg.push("fa_bias", "mean", mean(&bias));
    agg.push("fa_std", "median", quantile(&spread_s, 0.5));
    agg.push("fa_std", "mean", mean(&spread));

    agg.distribution("dti_angular_error", &pool(|r| &r.dti_error));
    agg.distribution("odf_angular_error", &pool(|r| &r.odf_error));
    let fp: Vec<f64> = runs.iter().map(|r| r.false_peak_pct).collect();
    agg.push("false_peak_pct", "mean", mean(&fp));
    agg.push("false_peak_pct", "std", std_dev(&fp));
    agg.rows
}

/// Runs `mc.n_mc` realizations per scheme with seeds `mc.seed + i`.
///
/// Reconstructions use `mask` (normally the phantom head). Results do not
/// depend on the number of threads.
#[allow(clippy::too_many_arguments)]
pub fn run_monte_carlo(
    truth: &DwiVolumeSet,
    evaluator: &Evaluator,
    mask: &Mask,
    basis: &EncodingBasis,
    dict: &RidgeletDictionary,
    cfg: &SolverConfig,
    mc: &McConfig,
) -> Result<McSummary> {
    mc.validate()?;
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut realizations = Vec::new();
    let opts = ReconOptions {
        mask: Some(mask.clone()),
        ..ReconOptions::default()
    };
    for (label, factor) in mc
        .labels()
        .into_iter()
        .zip(mc.factors.iter().map(|&f| Some(f)).chain(std::iter::once(None)))
    {
        let runs: Vec<Result<(VoxelMetrics, usize)>> = (0..mc.n_mc)
            .into_par_iter()
            .map(|i| {
                let seed = mc.seed.wrapping_add(i as u64);
                let (recon, iters) = match factor {
                    Some(f) => {
                        let scheme = make_scheme_for(truth.n_q(), f)?;
                        let noise = if mc.snr.is_infinite() {
                            NoiseSpec::noiseless()
                        } else {
                            NoiseSpec::new(mc.snr, seed)?
                        };
                        let acq = simulate_acquisition(truth, basis, &scheme, &noise)?;
                        let (s, rep) = reconstruct(&acq, basis, &scheme, dict, cfg, &opts)?;
                        (s, rep.iterations_run)
                    }
                    None => (simulate_hr(truth, hr_sigma(mc.snr), seed), 0),
                };
                Ok((evaluator.evaluate(&recon)?, iters))
            })
            .collect();
        let mut metrics = Vec::with_capacity(runs.len());
        for (i, r) in runs.into_iter().enumerate() {
            let (m, iterations) = r?;
            metrics.push(m);
            realizations.push(RealizationRecord {
                scheme: label.clone(),
                index: i,
                seed: mc.seed.wrapping_add(i as u64),
                iterations,
            });
        }
        rows.extend(aggregate(&label, &metrics));
    }
    Ok(McSummary {
        n_mc: mc.n_mc,
        rows,
        realizations,
    })
}
