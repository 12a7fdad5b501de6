//! ADMM iteration: slab least squares, ridgelet basis pursuit, TV
//! denoising and the two multiplier updates.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::bp::{BasisPursuit, BpOptions};
use super::config::SolverConfig;
use super::lls::{SlabFactors, SlabOperator};
use super::tv::{tv_prox, tv_seminorm};
use crate::encoding::{downsample, Acquisition, EncodingBasis};
use crate::error::{Error, Result};
use crate::qspace::SamplingScheme;
use crate::ridgelets::{RidgeFit, RidgeletDictionary};
use crate::volume::{DwiVolumeSet, Mask};

/// Ridge weight of the coefficient initialisation.
pub const INIT_RIDGE: f64 = 1e-3;

#[derive(Clone, Debug, Default)]
pub struct ReconOptions {
    /// Voxels to reconstruct. Defaults to voxels whose slab column carries
    /// non-zero data; everything else is set to zero.
    pub mask: Option<Mask>,
    /// γ ← γ + (S^t − Z^{t+1}) instead of using the fresh S.
    pub literal_gamma: bool,
    /// Voxels per basis-pursuit batch.
    pub bp_chunk: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// ½ Σ_k ‖D_k S Ω_k − Y_k‖².
    pub data: f64,
    /// λ Σ_n ‖c_n‖₁.
    pub l1: f64,
    /// λ_TV Σ_q TV(S_q).
    pub tv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub iterations_run: usize,
    pub rel_change_history: Vec<f64>,
    pub objective_history: Vec<ObjectiveTerms>,
    /// Not serialised, so report files are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub s: DwiVolumeSet,
    /// Ridgelet coefficients, one column per reconstructed voxel.
    pub c: DMatrix<f64>,
    /// A c scattered back onto the grid.
    pub ac: DwiVolumeSet,
    pub lambda_dual: DwiVolumeSet,
    pub z: DwiVolumeSet,
    pub gamma_dual: DwiVolumeSet,
    pub tv_dual: Vec<f64>,
    pub voxels: Vec<usize>,
    pub iter: usize,
    pub last_rel_change: f64,
}

/// Fixed pieces of one reconstruction problem.
pub struct Problem {
    pub op: SlabOperator,
    pub bty: DwiVolumeSet,
    pub mask: Mask,
    pub bp: BasisPursuit,
    fit: RidgeFit,
    acquisitions: Vec<Acquisition>,
    basis: EncodingBasis,
}

impl Problem {
    pub fn new(
        acquisitions: &[Acquisition],
        basis: &EncodingBasis,
        scheme: &SamplingScheme,
        dict: &RidgeletDictionary,
        mask: Option<&Mask>,
    ) -> Result<Self> {
        let first = acquisitions
            .first()
            .ok_or_else(|| Error::invalid("no acquisitions to reconstruct"))?;
        let [nx, ny, nb] = first.data.dims();
        let dims = [nx, ny, nb * basis.af];
        let op = SlabOperator::new(basis, scheme, dict.n_q())?;
        let bty = op.data_rhs(acquisitions, dims)?;
        let mask = match mask {
            Some(m) if m.dims() != dims => {
                return Err(Error::Shape(format!(
                    "mask dims {:?} differ from the thin grid {dims:?}",
                    m.dims()
                )))
            }
            Some(m) => m.clone(),
            None => data_support(acquisitions, dims, basis.af),
        };
        Ok(Self {
            op,
            bty,
            mask,
            bp: BasisPursuit::new(dict),
            fit: RidgeFit::new(dict, INIT_RIDGE)?,
            acquisitions: acquisitions.to_vec(),
            basis: basis.clone(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.bty.dims()
    }

    /// ½ Σ_k ‖D_k S Ω_k − Y_k‖².
    pub fn data_misfit(&self, s: &DwiVolumeSet) -> Result<f64> {
        let mut total = 0.0;
        for acq in &self.acquisitions {
            let pred = downsample(&s.select_q(&acq.q_indices)?, &self.basis, acq.rf_index)?;
            total += pred
                .values()
                .iter()
                .zip(acq.data.values())
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>();
        }
        Ok(0.5 * total)
    }
}

/// Thin voxels whose slab column has a non-zero sample in any acquisition.
fn data_support(acquisitions: &[Acquisition], dims: [usize; 3], af: usize) -> Mask {
    let [nx, ny, nz] = dims;
    let plane = nx * ny;
    let mut thick = vec![false; plane * (nz / af)];
    for acq in acquisitions {
        let n = acq.data.n_voxels();
        for q in 0..acq.data.n_q() {
            for (t, &v) in thick.iter_mut().zip(&acq.data.values()[q * n..(q + 1) * n]) {
                *t |= v != 0.0;
            }
        }
    }
    let inside = (0..plane * nz)
        .map(|i| thick[i % plane + (i / plane / af) * plane])
        .collect();
    Mask::new(dims, inside).expect("mask dims match the grid")
}

fn check_finite(stage: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Numerical {
            stage,
            detail: format!("non-finite value at element {i}"),
        }),
    }
}

fn zero_outside(s: &mut DwiVolumeSet, mask: &Mask) {
    let n = s.n_voxels();
    for q in 0..s.n_q() {
        let vol = &mut s.values_mut()[q * n..(q + 1) * n];
        for (v, &m) in vol.iter_mut().zip(mask.as_slice()) {
            if !m {
                *v = 0.0;
            }
        }
    }
}

fn gather(sets: &[&DwiVolumeSet], voxels: &[usize]) -> DMatrix<f64> {
    let first = sets[0];
    let (n, nq) = (first.n_voxels(), first.n_q());
    DMatrix::from_fn(nq, voxels.len(), |q, j| {
        sets.iter().map(|s| s.values()[voxels[j] + q * n]).sum()
    })
}

fn scatter(m: &DMatrix<f64>, voxels: &[usize], out: &mut DwiVolumeSet) {
    let n = out.n_voxels();
    let vals = out.values_mut();
    vals.iter_mut().for_each(|v| *v = 0.0);
    for (j, &v) in voxels.iter().enumerate() {
        for q in 0..m.nrows() {
            vals[v + q * n] = m[(q, j)];
        }
    }
}

fn relative_change(new: &DwiVolumeSet, old: &DwiVolumeSet) -> f64 {
    let diff: f64 = new
        .values()
        .iter()
        .zip(old.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let base = old.norm();
    if base > 0.0 {
        diff / base
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Tikhonov solution, ridge coefficients and zero multipliers.
pub fn init_state(problem: &Problem, cfg: &SolverConfig) -> Result<AdmmState> {
    let mut s = problem.op.solve(&problem.op.factor(cfg.tikhonov_mu)?, &problem.bty);
    zero_outside(&mut s, &problem.mask);
    check_finite("init", s.values())?;
    let voxels = problem.mask.indices();
    let c = problem.fit.operator() * gather(&[&s], &voxels);
    let mut ac = s.zeros_like(s.n_q());
    scatter(&(problem.bp.dictionary() * &c), &voxels, &mut ac);
    let zeros = s.zeros_like(s.n_q());
    Ok(AdmmState {
        z: s.clone(),
        lambda_dual: zeros.clone(),
        gamma_dual: zeros,
        tv_dual: vec![0.0; 3 * s.values().len()],
        s,
        c,
        ac,
        voxels,
        iter: 0,
        last_rel_change: f64::INFINITY,
    })
}

/// S ← (Σ B_kᵀB_k + (ρ1+ρ2)I)⁻¹ (Σ B_kᵀy_k + ρ1(Ac − Λ) + ρ2(Z − γ)).
pub fn lls_update(
    state: &mut AdmmState,
    problem: &Problem,
    factors: &SlabFactors,
    cfg: &SolverConfig,
) -> Result<()> {
    let mut rhs = problem.bty.clone();
    for (r, (&a, &l)) in rhs
        .values_mut()
        .iter_mut()
        .zip(state.ac.values().iter().zip(state.lambda_dual.values()))
    {
        *r += cfg.rho1 * (a - l);
    }
    if cfg.rho2 != 0.0 {
        for (r, (&z, &g)) in rhs
            .values_mut()
            .iter_mut()
            .zip(state.z.values().iter().zip(state.gamma_dual.values()))
        {
            *r += cfg.rho2 * (z - g);
        }
    }
    state.s = problem.op.solve(factors, &rhs);
    zero_outside(&mut state.s, &problem.mask);
    check_finite("lls", state.s.values())
}

/// Per-voxel ℓ1 fit of the ridgelet coefficients to S + Λ.
pub fn bp_update(state: &mut AdmmState, problem: &Problem, cfg: &SolverConfig, chunk: usize) -> Result<()> {
    let b = gather(&[&state.s, &state.lambda_dual], &state.voxels);
    let opts = BpOptions {
        max_iters: cfg.bp_inner_iters,
        tol: 1e-6,
        chunk,
    };
    let sol = problem.bp.solve(&b, &state.c, cfg.lambda, cfg.rho1, &opts)?;
    check_finite("bp", sol.coefficients.as_slice())?;
    state.c = sol.coefficients;
    scatter(&sol.synthesis, &state.voxels, &mut state.ac);
    Ok(())
}

/// Λ ← Λ + (S − A c).
pub fn lambda_dual_update(state: &mut AdmmState) -> Result<()> {
    for (l, (&s, &a)) in state
        .lambda_dual
        .values_mut()
        .iter_mut()
        .zip(state.s.values().iter().zip(state.ac.values()))
    {
        *l += s - a;
    }
    check_finite("lambda-update", state.lambda_dual.values())
}

/// Z ← prox_{(λ_TV/ρ2)·TV}(S + γ), warm-starting the dual field.
pub fn tv_update(state: &mut AdmmState, cfg: &SolverConfig) -> Result<()> {
    let mut f = state.s.clone();
    for (v, &g) in f.values_mut().iter_mut().zip(state.gamma_dual.values()) {
        *v += g;
    }
    if cfg.lambda_tv == 0.0 {
        state.z = f;
    } else {
        let theta = cfg.lambda_tv / cfg.rho2;
        let dims = f.dims();
        tv_prox(
            f.values(),
            dims,
            theta,
            cfg.tv_inner_iters,
            &mut state.tv_dual,
            state.z.values_mut(),
        );
    }
    check_finite("tv", state.z.values())
}

/// γ ← γ + (S − Z). `previous_s` selects the literal S^t form.
pub fn gamma_dual_update(state: &mut AdmmState, previous_s: Option<&DwiVolumeSet>) -> Result<()> {
    let s = previous_s.unwrap_or(&state.s);
    for (g, (&sv, &z)) in state
        .gamma_dual
        .values_mut()
        .iter_mut()
        .zip(s.values().iter().zip(state.z.values()))
    {
        *g += sv - z;
    }
    check_finite("gamma-update", state.gamma_dual.values())
}

fn objective(state: &AdmmState, problem: &Problem, cfg: &SolverConfig) -> Result<ObjectiveTerms> {
    let l1 = cfg.lambda * state.c.iter().map(|c| c.abs()).sum::<f64>();
    let tv = if cfg.lambda_tv == 0.0 {
        0.0
    } else {
        let dims = state.s.dims();
        cfg.lambda_tv * (0..state.s.n_q()).map(|q| tv_seminorm(state.s.q_volume(q), dims)).sum::<f64>()
    };
    Ok(ObjectiveTerms {
        data: problem.data_misfit(&state.s)?,
        l1,
        tv,
    })
}

/// Full gSlider-SR reconstruction.
pub fn reconstruct(
    acquisitions: &[Acquisition],
    basis: &EncodingBasis,
    scheme: &SamplingScheme,
    dict: &RidgeletDictionary,
    cfg: &SolverConfig,
    opts: &ReconOptions,
) -> Result<(DwiVolumeSet, ReconReport)> {
    let start = Instant::now();
    cfg.validate()?;
    let problem = Problem::new(acquisitions, basis, scheme, dict, opts.mask.as_ref())?;
    let factors = problem.op.factor(cfg.rho1 + cfg.rho2)?;
    let chunk = opts.bp_chunk.unwrap_or(BpOptions::default().chunk);
    let mut state = init_state(&problem, cfg)?;
    let mut report = ReconReport {
        iterations_run: 0,
        rel_change_history: Vec::new(),
        objective_history: Vec::new(),
        wall_time: Duration::ZERO,
    };
    while state.iter < cfg.n_iter {
        let previous = state.s.clone();
        lls_update(&mut state, &problem, &factors, cfg)?;
        bp_update(&mut state, &problem, cfg, chunk)?;
        lambda_dual_update(&mut state)?;
        tv_update(&mut state, cfg)?;
        gamma_dual_update(&mut state, opts.literal_gamma.then_some(&previous))?;
        state.iter += 1;
        state.last_rel_change = relative_change(&state.s, &previous);
        report.rel_change_history.push(state.last_rel_change);
        report.objective_history.push(objective(&state, &problem, cfg)?);
        if state.last_rel_change < cfg.epsilon {
            break;
        }
    }
    report.iterations_run = state.iter;
    report.wall_time = start.elapsed();
    Ok((state.s, report))
}

/// The TV-free three-step iteration (least squares, basis pursuit,
/// multiplier update). `lambda_tv` and `rho2` are ignored.
pub fn reconstruct_three_step(
    acquisitions: &[Acquisition],
    basis: &EncodingBasis,
    scheme: &SamplingScheme,
    dict: &RidgeletDictionary,
    cfg: &SolverConfig,
    opts: &ReconOptions,
) -> Result<(DwiVolumeSet, ReconReport)> {
    let start = Instant::now();
    let cfg = SolverConfig {
        lambda_tv: 0.0,
        rho2: 0.0,
        ..cfg.clone()
    };
    cfg.validate()?;
    let problem = Problem::new(acquisitions, basis, scheme, dict, opts.mask.as_ref())?;
    let factors = problem.op.factor(cfg.rho1)?;
    let chunk = opts.bp_chunk.unwrap_or(BpOptions::default().chunk);
    let mut st = init_state(&problem, &cfg)?;
    let mut report = ReconReport {
        iterations_run: 0,
        rel_change_history: Vec::new(),
        objective_history: Vec::new(),
        wall_time: Duration::ZERO,
    };
    for _ in 0..cfg.n_iter {
        let previous = st.s.clone();
        let mut rhs = problem.bty.clone();
        for (i, r) in rhs.values_mut().iter_mut().enumerate() {
            *r += cfg.rho1 * (st.ac.values()[i] - st.lambda_dual.values()[i]);
        }
        st.s = problem.op.solve(&factors, &rhs);
        zero_outside(&mut st.s, &problem.mask);
        check_finite("lls", st.s.values())?;
        bp_update(&mut st, &problem, &cfg, chunk)?;
        lambda_dual_update(&mut st)?;
        st.iter += 1;
        st.last_rel_change = relative_change(&st.s, &previous);
        report.rel_change_history.push(st.last_rel_change);
        report.objective_history.push(objective(&st, &problem, &cfg)?);
        if st.last_rel_change < cfg.epsilon {
            break;
        }
    }
    report.iterations_run = st.iter;
    report.wall_time = start.elapsed();
    Ok((st.s, report))
}
