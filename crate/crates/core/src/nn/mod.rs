//! Minimal CPU network engine: each layer has an explicit forward pass that
//! returns a cache and a backward pass that consumes it. Parameters live in a
//! flat [`ParamStore`]; layers refer to them by [`ParamId`].

pub mod act;
pub mod adam;
pub mod conv;
pub mod linear;
pub mod norm;
pub mod params;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use params::{Entry, Grads, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};

/// Normalization behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// BatchNorm uses batch statistics.
    Train,
    /// BatchNorm uses running statistics; outputs are per-sample deterministic.
    Eval,
}
