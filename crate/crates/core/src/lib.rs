//! Encoder-decoder Transformers in which every attention site is a pluggable
//! strategy: learned multi-head attention, fixed Gaussian attention, fixed
//! convolution, row indexing, or nothing at all.

pub mod attention;
pub mod analysis;
pub mod autograd;
pub mod bench;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod sweep;
pub mod tensor;
pub mod train;

pub use autograd::{grad_check, GradCheckReport, Tape, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;

pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
