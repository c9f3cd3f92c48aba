//! Single-snapshot direction-of-arrival estimation with sparse solvers and
//! their deep-unfolded counterparts.
//!
//! The crate covers the full pipeline: array geometry and dictionary
//! construction, complex LASSO via ISTA and ADMM, the unfolded networks
//! (LISTA, TLISTA, THLISTA, ADMM-Net, THADMM-Net) with a Toeplitz-Hermitian
//! PSD-constrained parametrization, hand-rolled reverse-mode gradients,
//! synthetic dataset generation, Adam training, and the detection-rate /
//! RMSE / NMSE evaluation protocol.

// Index-coupled loops (x[j] against t[m - j]) dominate the numeric kernels;
// iterator rewrites obscure them.
#![allow(clippy::needless_range_loop)]

pub mod array;
pub mod datagen;
pub mod error;
pub mod grad;
pub mod linalg;
pub mod metrics;
pub mod nets;
pub mod solvers;
pub mod toeplitz;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{C64, CMat};
