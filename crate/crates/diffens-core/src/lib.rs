//! Score-based diffusion on tabular data with pluggable ensembles of score
//! predictors.
//!
//! The crate covers the full in-process pipeline:
//!
//! * [`schedule`] — the variance-preserving forward/backward process, its
//!   closed-form marginals and the sampling time grid;
//! * [`score`] — the [`score::ScorePredictor`] interface plus analytic and
//!   synthetic implementations used for verification;
//! * [`tree`] / [`forest`] — from-scratch multi-target CART trees and
//!   bootstrap random forests exposing per-tree predictions;
//! * [`forest_vp`] — one forest per noise level regressing the conditional
//!   score, packaged as a score predictor;
//! * [`aggregate`] — step-wise aggregation rules over K score vectors and the
//!   leave-one-out loss decomposition;
//! * [`sampler`] — reverse-time Euler–Maruyama generation with step-wise and
//!   trajectory-level ensemble schemes, plus the probability-flow ODE step;
//! * [`likelihood`] — exact-marginal log-likelihood through the
//!   probability-flow ODE with exact or Hutchinson divergence estimates;
//! * [`metrics`] — denoising score-matching loss, exact Wasserstein-1,
//!   coverage and predictive diversity;
//! * [`gaussian`] — closed-form algebra for centered Gaussians under
//!   diffusion and product-of-experts composition.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the companion crate
//! `diffens` adds file formats, a CLI and parallel training on top.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod aggregate;
pub mod dataset;
pub mod error;
pub(crate) mod fmath;
pub mod forest;
pub mod forest_vp;
pub mod gaussian;
pub mod likelihood;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod tree;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::{Stream, StreamRng};
