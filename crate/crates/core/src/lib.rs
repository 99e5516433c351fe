//! Adaptive Parametric Activation (APA) and Adaptive Generalised Linear Unit
//! (AGLU) with exact gradients, a small reverse-mode training engine, and
//! diagnostics for logit distributions, channel attention and neural collapse.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the common double-precision instantiations.

pub mod activation;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod nn;
pub mod scalar;
pub mod stats;
pub mod tensor;

pub use error::{ApaError, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Params64 = activation::ActivationParams<f64>;
pub type Params32 = activation::ActivationParams<f32>;
pub type Kind64 = activation::ActivationKind<f64>;
pub type Empirical64 = stats::EmpiricalDistribution<f64>;
pub type Cdf64 = stats::FittedCdf<f64>;
pub type Network64 = nn::Network<f64>;
pub type Dataset64 = datagen::SampledDataset<f64>;
