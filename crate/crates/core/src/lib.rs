//! Quasi-homophone generation from phoneme sequences.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below fix the
//! precision for the common cases.

pub mod audio;
pub mod evaluation;
pub mod generator;
pub mod minilang;
pub mod model;
pub mod nn;
pub mod phonology;
pub mod scalar;

pub use scalar::{DType, Scalar};

/// Single-precision model, the default for training and generation.
pub type ModelF32 = model::Model<f32>;
/// Double-precision model, used for gradient checks and oracles.
pub type ModelF64 = model::Model<f64>;
pub type TensorF32 = nn::Tensor<f32>;
pub type TensorF64 = nn::Tensor<f64>;
