//! A small CPU neural-network engine.
//!
//! Real-valued NCHW tensors, a fixed set of layers with hand-written
//! backward passes, BCE/MSE losses, Adam, central-difference gradient
//! checking, and a binary checkpoint container. Everything is generic over
//! [`Scalar`] so the same network can be trained in `f32` and checked in
//! `f64`.

mod adam;
pub mod checkpoint;
mod error;
mod gradcheck;
pub mod layer;
mod loss;
mod network;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use layer::{Layer, LayerKind, Mode};
pub use loss::{bce_loss, mse_loss, BCE_EPSILON};
pub use network::{Network, ParamRef};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Standard deviation used for conv/dense weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Draws one standard normal variate with the Box–Muller transform.
pub(crate) fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - u keeps the argument of ln strictly positive
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
