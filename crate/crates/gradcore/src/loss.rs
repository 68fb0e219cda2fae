//! Adversarial losses.

use crate::error::{config, Result};
use crate::ops::{self, mean_all, mul, softplus, sub};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::var::Var;

/// Mean of `softplus(l) - t l`, the cross entropy of `sigmoid(l)` against `t`.
pub fn bce_with_logits<T: Scalar>(logits: &Var<T>, targets: &Tensor<T>) -> Result<Var<T>> {
    if logits.shape() != targets.shape() {
        return config(format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()));
    }
    let t = Var::constant(targets.clone());
    Ok(mean_all(&sub(&softplus(logits), &mul(&t, logits)?)?))
}

/// Smallest probability seen by the logarithm; caps each term at 100 nats.
pub const PROB_FLOOR: f64 = 3.720_075_976_020_836e-44;

/// Mean binary cross entropy on probabilities (sigmoid-terminated networks).
pub fn bce<T: Scalar>(probs: &Var<T>, targets: &Tensor<T>) -> Result<Var<T>> {
    if probs.shape() != targets.shape() {
        return config(format!("probs {:?} vs targets {:?}", probs.shape(), targets.shape()));
    }
    let floor = T::of(PROB_FLOOR).max(T::min_positive_value());
    let t = Var::constant(targets.clone());
    let one_minus_t = Var::constant(targets.map(|v| T::one() - v));
    let log_p = ops::ln(&ops::clamp(probs, floor, T::one()));
    let log_q = ops::ln(&ops::clamp(&ops::add_scalar(&ops::neg(probs), T::one()), floor, T::one()));
    let ll = ops::add(&mul(&t, &log_p)?, &mul(&one_minus_t, &log_q)?)?;
    Ok(ops::neg(&mean_all(&ll)))
}
