//! Desk-scale CT metal artifact reduction toolkit.
//!
//! Simulates metal-corrupted CT data in 2-D, implements the classical
//! sinogram-completion baselines (LI, NMAR), and trains a generative
//! completion model (mask pyramid network + mask fusion loss + residual
//! sinogram correction) on a built-in tensor/autodiff engine. An
//! evaluation harness reproduces the RMSE/SSIM-vs-mask-size protocol
//! and renders reports.

pub mod classic;
pub mod ct;
pub mod error;
pub mod eval;
pub mod gan;
pub mod gradcheck;
pub mod io;
pub mod mask;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
