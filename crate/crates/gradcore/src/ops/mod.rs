//! Differentiable operations on [`Var`](crate::Var)s.

mod channel;
mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod resample;

pub use channel::{channel_affine, channel_broadcast, channel_sum};
pub use conv::{
    conv3d, conv3d_transposed, conv_forward, conv_input_grad, conv_weight_grad, ConvGeom,
};
pub use elementwise::{
    add, add_scalar, clamp, exp, leaky_relu, ln, mask_mul, mul, neg, powf, relu, scale, sigmoid,
    softplus, square, sub, tanh,
};
pub use linalg::{matmul, transpose};
pub use reduce::{broadcast_scalar, broadcast_to, mean_all, reshape, sum_all, sum_to};
pub use resample::{avg_pool, sum_pool, upsample_nearest};
