//! Curvature-aware (CA) optimization for physics-informed neural networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`mathcore`]: dense matrices, deterministic RNG, Jacobi eigensolver and
//!   Newton–Schulz orthogonalization.
//! - [`autodiff`]: a reverse-mode tape over dense matrices and nestable
//!   Taylor jets, composable so that input derivatives of a network stay
//!   differentiable with respect to its parameters.
//! - [`network`]: tanh MLPs with optional Fourier-feature embedding.
//! - [`optim`]: AdamW, Muon, SOAP and the secant-gated wrapper that turns
//!   each of them into its curvature-aware variant.
//! - [`pde`]: benchmark problems, collocation sampling, the composite PINN
//!   loss and error metrics.
//! - [`trainer`]: training loop, learning-rate schedule, time marching and
//!   the secant diagnostics.

pub mod autodiff;
pub mod container;
pub mod error;
pub mod mathcore;
pub mod network;
pub mod optim;
pub mod pde;
pub mod trainer;

pub use error::{Error, Result};
