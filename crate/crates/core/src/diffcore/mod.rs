//! Minimal reverse-mode substrate for point-set networks.
//!
//! A [`Network`] is a straight chain of [`LayerSpec`]s: affine maps,
//! elementwise activations, a set max-pool over the point (row) axis, and a
//! concat that appends a broadcast side vector (e.g. a latent code) to every
//! row. Forward passes record a [`Tape`]; backward consumes it, so a backward
//! without a matching forward cannot be expressed.

mod gradcheck;
mod network;

pub use gradcheck::{check_gradients, BlockCheck, GradCheckOptions, GradientReport, Objective, SquaredErrorObjective};
pub use network::{Backward, LayerKind, LayerSpec, Network, ParameterBlock, Tape};

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
