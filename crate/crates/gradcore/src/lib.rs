//! Reverse-mode automatic differentiation over dense 5-D tensors, with the
//! convolution, normalization and loss primitives needed for volumetric GANs.
//!
//! Every value is generic over [`Scalar`] (`f32` or `f64`); gradients are
//! themselves recorded when requested, so penalties on input gradients can be
//! differentiated again.

mod error;
mod kernels;
mod scalar;
mod tensor;
mod var;

pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod norm;
pub mod ops;
pub mod optim;
pub mod spectral;

pub use error::{GradError, Result};
pub use norm::{NormMode, RunningStats};
pub use ops::ConvGeom;
pub use optim::{Adam, Parameter};
pub use scalar::{gemm, Scalar, Trans};
pub use spectral::MatrixView;
pub use tensor::{numel, Tensor};
pub use var::{grad, grad_with_seed, is_grad_enabled, no_grad, BackwardOp, NoGradGuard, Var};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Var64 = Var<f64>;
pub type Var32 = Var<f32>;
pub type Parameter64 = Parameter<f64>;
pub type Parameter32 = Parameter<f32>;
