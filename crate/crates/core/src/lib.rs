//! gSlider-SR: super-resolution reconstruction of thin-slice diffusion MRI
//! from q-space undersampled, RF-slab-encoded thick-slice acquisitions.
//!
//! The crate is organised along the processing chain:
//!
//! - [`qspace`]: spherical-spiral gradient designs and the complementary
//!   RF/q-space undersampling schemes.
//! - [`ridgelets`]: the spherical-ridgelet dictionary, even spherical
//!   harmonics, the icosahedral tessellation and Funk–Radon ODFs.
//! - [`encoding`]: volumes, the RF-encoding downsampling operator, noise
//!   and the synthetic multi-tensor phantom.
//! - [`solver`]: the ADMM reconstruction (ridgelet ℓ1 + total variation)
//!   and the Tikhonov baseline.
//! - [`analysis`]: NMSE, tensor fitting, ODF peaks and the Monte-Carlo study.
//! - [`io`]: on-disk formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod encoding;
pub mod error;
pub mod io;
pub mod qspace;
pub mod ridgelets;
pub mod solver;
mod volume;

pub use error::{Error, Result};
pub use volume::{DwiVolumeSet, Mask};
