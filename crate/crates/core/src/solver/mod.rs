//! Reconstruction of the thin-slice set from undersampled RF-encoded data.

pub mod admm;
pub mod bp;
mod config;
pub mod lls;
pub mod tv;

pub use admm::{
    bp_update, gamma_dual_update, init_state, lambda_dual_update, lls_update, reconstruct,
    reconstruct_three_step, tv_update, AdmmState, ObjectiveTerms, Problem, ReconOptions,
    ReconReport,
};
pub use bp::{soft_threshold, BasisPursuit, BpOptions, BpSolution};
pub use config::SolverConfig;
pub use lls::{tikhonov_init, SlabFactors, SlabOperator};
pub use tv::{tv_prox, tv_prox_volume, tv_seminorm};
