//! Reverse-mode tape over dense matrices and forward-mode Taylor jets.
//!
//! The two compose: a `Jet<Var>` carries input derivatives of a network
//! whose every coefficient is a tape node, so residual losses that contain
//! `u_t`, `u_xx` or `u_xxxx` stay differentiable with respect to weights.

mod jet;
mod real;
mod tape;

pub use jet::{jet_eval, mixed_partial, Jet, Nest, ScalarFn};
pub use real::{
    elementary_derivs, faa_di_bruno, powi_by_squaring, Elementary, Real, Tensor, MAX_ORDER,
};
pub use tape::{grad, Gradients, Tape, Var};
