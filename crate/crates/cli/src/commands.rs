use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gslider_core::analysis::{run_monte_carlo, Evaluator, McConfig, PeakParams};
use gslider_core::encoding::{
    default_basis, make_phantom, simulate_acquisition, Acquisition, EncodingBasis, Labels,
    NoiseSpec,
};
use gslider_core::io::{
    read_basis, read_config, read_gradients, read_scheme, read_volume, with_extension,
    write_basis, write_gradients, write_json, write_scheme,
    write_volume_described,
};
use gslider_core::qspace::{make_scheme_for, spiral_directions, QSpaceDesign};
use gslider_core::ridgelets::{RidgeletDictionary, RidgeletParams};
use gslider_core::solver::{reconstruct, tikhonov_init, ReconOptions, ReconReport, SolverConfig};
use gslider_core::{Error, Mask, Result};
use serde::Serialize;

use crate::args::{Command, Method};

/// Files touched by a command, for the manifest.
#[derive(Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    /// Where the manifest goes.
    pub manifest: PathBuf,
}

fn suffixed(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn volume_files(stem: &Path) -> [PathBuf; 2] {
    [with_extension(stem, "json"), with_extension(stem, "f32")]
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn basis_or_default(path: &Option<PathBuf>) -> Result<EncodingBasis> {
    match path {
        Some(p) => read_basis(p),
        None => default_basis(5),
    }
}

/// Solver settings a command will use, with every default filled in.
pub fn resolve_config(cmd: &Command) -> Result<Option<SolverConfig>> {
    let path = match cmd {
        Command::Reconstruct { config, .. } | Command::Mc { config, .. } => config,
        _ => return Ok(None),
    };
    Ok(Some(match path {
        Some(p) => read_config(p)?,
        None => SolverConfig::default(),
    }))
}

pub fn run(cmd: &Command, cfg: Option<&SolverConfig>) -> Result<Outcome> {
    match cmd {
        Command::Gradients {
            n,
            bvalue,
            n_b0,
            out,
        } => {
            let design = spiral_directions(*n, *bvalue)?.with_n_b0(*n_b0);
            write_gradients(out, &design)?;
            Ok(Outcome {
                outputs: vec![out.clone()],
                manifest: suffixed(out, ".manifest.json"),
                ..Outcome::default()
            })
        }
        Command::Phantom {
            dims,
            voxel_size,
            gradients,
            out,
        } => phantom(*dims, *voxel_size, gradients, out),
        Command::Simulate {
            truth,
            gradients,
            basis,
            scheme_factor,
            snr,
            seed,
            out_dir,
        } => simulate(truth, gradients, basis, *scheme_factor, *snr, *seed, out_dir),
        Command::Reconstruct {
            acq_dir,
            method,
            mask,
            literal_gamma_update,
            out,
            ..
        } => {
            let cfg = cfg.expect("reconstruct has a resolved configuration");
            reconstruct_cmd(acq_dir, cfg, *method, mask, *literal_gamma_update, out)
        }
        Command::Evaluate {
            recon,
            truth,
            labels,
            gradients,
            scheme,
            nmse_map,
            out_csv,
        } => evaluate(recon, truth, labels, gradients, scheme, nmse_map, out_csv),
        Command::Mc {
            truth,
            labels,
            gradients,
            basis,
            factors,
            include_hr,
            n_mc,
            snr,
            seed,
            out_dir,
            ..
        } => {
            let cfg = cfg.expect("mc has a resolved configuration");
            let mc = McConfig {
                factors: factors.clone(),
                include_hr: *include_hr,
                n_mc: *n_mc,
                snr: *snr,
                seed: *seed,
            };
            monte_carlo(truth, labels, gradients, basis, cfg, &mc, out_dir)
        }
        Command::Replay { .. } => unreachable!("replay is resolved by the caller"),
    }
}

fn phantom(dims: [usize; 3], voxel_size: [f64; 3], gradients: &Path, out: &Path) -> Result<Outcome> {
    let design = read_gradients(gradients)?;
    let (truth, labels) = make_phantom(dims, voxel_size, &design)?;
    write_volume_described(out, &truth, "ground-truth b0-normalised signal")?;
    let label_stem = suffixed(out, "_labels");
    write_volume_described(
        &label_stem,
        &labels.to_volume(voxel_size)?,
        "region codes: 0 background, 1 csf, 2 grey matter, 3 bundle x, 4 bundle z, 5 crossing",
    )?;
    let grad_copy = suffixed(out, "_gradients.txt");
    write_gradients(&grad_copy, &design)?;
    let mut outputs = Vec::new();
    outputs.extend(volume_files(out));
    outputs.extend(volume_files(&label_stem));
    outputs.push(grad_copy);
    Ok(Outcome {
        inputs: vec![gradients.to_path_buf()],
        outputs,
        seed: None,
        manifest: suffixed(out, ".manifest.json"),
    })
}

fn acquisition_stem(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("y_k{k}"))
}

fn simulate(
    truth_stem: &Path,
    gradients: &Option<PathBuf>,
    basis_path: &Option<PathBuf>,
    factor: usize,
    snr: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<Outcome> {
    let truth = read_volume(truth_stem)?;
    let grad_path = gradients
        .clone()
        .unwrap_or_else(|| suffixed(truth_stem, "_gradients.txt"));
    let design = read_gradients(&grad_path)?;
    if design.n_q() != truth.n_q() {
        return Err(Error::Shape(format!(
            "gradient table has {} directions, truth has {} q-volumes",
            design.n_q(),
            truth.n_q()
        )));
    }
    let basis = basis_or_default(basis_path)?;
    let scheme = make_scheme_for(truth.n_q(), factor)?;
    let noise = if snr.is_infinite() {
        NoiseSpec::noiseless()
    } else {
        NoiseSpec::new(snr, seed)?
    };
    let acq = simulate_acquisition(&truth, &basis, &scheme, &noise)?;
    create_dir(out_dir)?;
    let mut outputs = Vec::new();
    for a in &acq {
        let stem = acquisition_stem(out_dir, a.rf_index);
        write_volume_described(&stem, &a.data, &format!("thick-slice data of RF profile {}", a.rf_index))?;
        outputs.extend(volume_files(&stem));
    }
    let files = [
        out_dir.join("scheme.json"),
        out_dir.join("basis.json"),
        out_dir.join("gradients.txt"),
    ];
    write_scheme(&files[0], &scheme)?;
    write_basis(&files[1], &basis)?;
    write_gradients(&files[2], &design)?;
    outputs.extend(files);
    let mut inputs = vec![grad_path];
    inputs.extend(volume_files(truth_stem));
    inputs.extend(basis_path.clone());
    Ok(Outcome {
        inputs,
        outputs,
        seed: Some(seed),
        manifest: out_dir.join("manifest.json"),
    })
}

struct AcqDir {
    acquisitions: Vec<Acquisition>,
    basis: EncodingBasis,
    scheme: gslider_core::qspace::SamplingScheme,
    design: QSpaceDesign,
    files: Vec<PathBuf>,
}

fn read_acq_dir(dir: &Path) -> Result<AcqDir> {
    let scheme = read_scheme(&dir.join("scheme.json"))?;
    let basis = read_basis(&dir.join("basis.json"))?;
    let design = read_gradients(&dir.join("gradients.txt"))?;
    scheme.validate(design.n_q())?;
    let mut files = vec![dir.join("scheme.json"), dir.join("basis.json"), dir.join("gradients.txt")];
    let mut acquisitions = Vec::new();
    for (k, q) in scheme.assignments.iter().enumerate() {
        if q.is_empty() {
            continue;
        }
        let stem = acquisition_stem(dir, k);
        let data = read_volume(&stem)?;
        if data.n_q() != q.len() {
            return Err(Error::Shape(format!(
                "{} holds {} q-volumes, scheme assigns {}",
                stem.display(),
                data.n_q(),
                q.len()
            )));
        }
        files.extend(volume_files(&stem));
        acquisitions.push(Acquisition {
            rf_index: k,
            q_indices: q.clone(),
            data,
        });
    }
    Ok(AcqDir {
        acquisitions,
        basis,
        scheme,
        design,
        files,
    })
}

fn read_mask(stem: &Path) -> Result<Mask> {
    let v = read_volume(stem)?;
    if v.n_q() != 1 {
        return Err(Error::InvalidArgument(format!(
            "mask {} must hold a single volume",
            stem.display()
        )));
    }
    Mask::new(v.dims(), v.values().iter().map(|&x| x != 0.0).collect())
}

fn reconstruct_cmd(
    acq_dir: &Path,
    cfg: &SolverConfig,
    method: Method,
    mask: &Option<PathBuf>,
    literal_gamma: bool,
    out: &Path,
) -> Result<Outcome> {
    let acq = read_acq_dir(acq_dir)?;
    let mut inputs = acq.files.clone();
    let mask = match mask {
        Some(m) => {
            inputs.extend(volume_files(m));
            Some(read_mask(m)?)
        }
        None => None,
    };
    let (s, report) = match method {
        Method::GsliderSr => {
            let dict = RidgeletDictionary::build(&acq.design, &RidgeletParams::default())?;
            let opts = ReconOptions {
                mask,
                literal_gamma,
                bp_chunk: None,
            };
            reconstruct(&acq.acquisitions, &acq.basis, &acq.scheme, &dict, cfg, &opts)?
        }
        Method::Tikhonov => {
            let [nx, ny, nb] = acq.acquisitions[0].data.dims();
            let mut s = tikhonov_init(
                &acq.acquisitions,
                &acq.basis,
                &acq.scheme,
                [nx, ny, nb * acq.basis.af],
                acq.design.n_q(),
                cfg.tikhonov_mu,
            )?;
            if let Some(m) = &mask {
                let n = s.n_voxels();
                for (i, v) in s.values_mut().iter_mut().enumerate() {
                    if !m.contains(i % n) {
                        *v = 0.0;
                    }
                }
            }
            let report = ReconReport {
                iterations_run: 0,
                rel_change_history: Vec::new(),
                objective_history: Vec::new(),
                wall_time: Default::default(),
            };
            (s, report)
        }
    };
    write_volume_described(out, &s, "reconstructed thin-slice signal")?;
    let report_path = suffixed(out, "_report.json");
    write_json(&report_path, &report)?;
    let mut outputs = volume_files(out).to_vec();
    outputs.push(report_path);
    Ok(Outcome {
        inputs,
        outputs,
        seed: None,
        manifest: suffixed(out, ".manifest.json"),
    })
}

fn load_truth(
    truth_stem: &Path,
    labels: &Option<PathBuf>,
    gradients: &Option<PathBuf>,
) -> Result<(gslider_core::DwiVolumeSet, Labels, QSpaceDesign, Vec<PathBuf>)> {
    let truth = read_volume(truth_stem)?;
    let label_stem = labels.clone().unwrap_or_else(|| suffixed(truth_stem, "_labels"));
    let labels = Labels::from_volume(&read_volume(&label_stem)?)?;
    let grad_path = gradients
        .clone()
        .unwrap_or_else(|| suffixed(truth_stem, "_gradients.txt"));
    let design = read_gradients(&grad_path)?;
    let mut inputs = Vec::new();
    inputs.extend(volume_files(truth_stem));
    inputs.extend(volume_files(&label_stem));
    inputs.push(grad_path);
    Ok((truth, labels, design, inputs))
}

fn evaluate(
    recon_stem: &Path,
    truth_stem: &Path,
    labels: &Option<PathBuf>,
    gradients: &Option<PathBuf>,
    scheme: &str,
    nmse_map: &Option<PathBuf>,
    out_csv: &Path,
) -> Result<Outcome> {
    let (truth, labels, design, mut inputs) = load_truth(truth_stem, labels, gradients)?;
    let recon = read_volume(recon_stem)?;
    inputs.extend(volume_files(recon_stem));
    let dict = RidgeletDictionary::build(&design, &RidgeletParams::default())?;
    let ev = Evaluator::new(&truth, &labels, &design, &dict, PeakParams::default())?;
    let metrics = ev.evaluate(&recon)?;
    let mut csv = String::from(gslider_core::analysis::MC_CSV_HEADER);
    csv.push('\n');
    for (metric, stat, value) in metrics.summary().rows {
        let _ = writeln!(csv, "{scheme},{metric},{stat},{value}");
    }
    fs::write(out_csv, csv).map_err(|e| Error::Io {
        path: out_csv.to_path_buf(),
        source: e,
    })?;
    let mut outputs = vec![out_csv.to_path_buf()];
    if let Some(stem) = nmse_map {
        write_volume_described(stem, &ev.nmse_map(&recon)?, "per-voxel NMSE over the head mask")?;
        outputs.extend(volume_files(stem));
    }
    Ok(Outcome {
        inputs,
        outputs,
        seed: None,
        manifest: suffixed(out_csv, ".manifest.json"),
    })
}

#[derive(Serialize)]
struct RealizationManifest<'a> {
    scheme: &'a str,
    index: usize,
    seed: u64,
    snr: Option<f64>,
    iterations: usize,
}

fn monte_carlo(
    truth_stem: &Path,
    labels: &Option<PathBuf>,
    gradients: &Option<PathBuf>,
    basis_path: &Option<PathBuf>,
    cfg: &SolverConfig,
    mc: &McConfig,
    out_dir: &Path,
) -> Result<Outcome> {
    mc.validate()?;
    let (truth, labels, design, mut inputs) = load_truth(truth_stem, labels, gradients)?;
    let basis = basis_or_default(basis_path)?;
    inputs.extend(basis_path.clone());
    let dict = RidgeletDictionary::build(&design, &RidgeletParams::default())?;
    let ev = Evaluator::new(&truth, &labels, &design, &dict, PeakParams::default())?;
    let summary = run_monte_carlo(&truth, &ev, &labels.head(), &basis, &dict, cfg, mc)?;
    create_dir(out_dir)?;
    let csv_path = out_dir.join("summary.csv");
    fs::write(&csv_path, summary.to_csv()).map_err(|e| Error::Io {
        path: csv_path.clone(),
        source: e,
    })?;
    let real_dir = out_dir.join("realizations");
    create_dir(&real_dir)?;
    let mut outputs = vec![csv_path];
    for r in &summary.realizations {
        let path = real_dir.join(format!("{}_{:03}.json", r.scheme, r.index));
        write_json(
            &path,
            &RealizationManifest {
                scheme: &r.scheme,
                index: r.index,
                seed: r.seed,
                snr: mc.snr.is_finite().then_some(mc.snr),
                iterations: r.iterations,
            },
        )?;
        outputs.push(path);
    }
    Ok(Outcome {
        inputs,
        outputs,
        seed: Some(mc.seed),
        manifest: out_dir.join("manifest.json"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_keeps_directories() {
        assert_eq!(suffixed(Path::new("a/b"), "_labels"), PathBuf::from("a/b_labels"));
        assert_eq!(
            volume_files(Path::new("x/v"))[1],
            PathBuf::from("x/v.f32")
        );
    }
}
