//! Plug-and-play ISTA with a non-local means kernel denoiser.
//!
//! With a frozen kernel denoiser `W` the iteration is the affine map
//! `x ↦ W (I - γ AᵀA) x + γ W Aᵀ y`, so convergence reduces to the spectral
//! radius of `P = W (I - γ AᵀA)`. The crate builds the pieces
//! ([`forward_model`], [`kernel_denoiser`]), runs the iteration
//! ([`pnp_engine`]), and checks stability on concrete instances
//! ([`spectral_analysis`]). [`experiment`] wires them into reproducible
//! restoration runs, step-size sweeps and analyses.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod forward_model;
pub mod image_io;
pub mod kernel_denoiser;
pub mod pnp_engine;
pub mod spectral_analysis;

pub use error::{Error, Result};
pub use forward_model::{LinearOperator, OperatorKind, Psf};
pub use image_io::{Image, Mask};
pub use kernel_denoiser::{build_nlm, DenoiserMatrix, NlmParams};
pub use pnp_engine::{IterationTrace, RunConfig, Termination};
