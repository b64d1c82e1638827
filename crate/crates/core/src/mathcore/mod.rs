//! Dense linear algebra and deterministic randomness.

mod eigen;
mod matrix;
mod newton_schulz;
mod rng;

pub use eigen::{jacobi_eigh, jacobi_eigh_with, DEFAULT_MAX_SWEEPS};
pub use matrix::{gemm, Matrix};
pub use newton_schulz::newton_schulz;
pub use rng::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal {off:e})")]
    Convergence { sweeps: usize, off: f64 },
}
