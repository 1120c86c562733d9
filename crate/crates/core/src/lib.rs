//! Self-organized operational neural networks (Self-ONNs) trained by hand-derived
//! backpropagation, an operational GAN that learns the healthy-to-faulty
//! transition of bearing vibration, and a compact detector trained on the
//! synthesized faults.
//!
//! All numeric code is generic over [`Scalar`]; the crate root re-exports
//! `f32` aliases for the types used by the pipeline.

// Negated comparisons double as NaN rejection in argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod detect;
pub mod error;
pub mod gan;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Buffer32 = tensor::Buffer<f32>;
pub type Buffer64 = tensor::Buffer<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
