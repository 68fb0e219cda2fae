//! Batch normalization and its latent-conditioned variant.

use crate::error::{config, GradError, Result};
use crate::ops::{self, channel_affine, channel_broadcast, channel_sum, matmul, mul, sub, transpose};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::var::{is_grad_enabled, BackwardOp, Var};

/// Fraction of the previous running statistic kept at each update.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel running statistics used in evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics; running statistics are refreshed when `update_stats`.
    Train { update_stats: bool },
    /// Running statistics.
    Eval,
}

struct StandardizeOp<T> {
    inv: Vec<T>,
}

impl<T: Scalar> BackwardOp<T> for StandardizeOp<T> {
    fn name(&self) -> &'static str {
        "standardize"
    }
    fn backward(&self, inp: &[Var<T>], out: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let x = &inp[0];
        let shape = x.shape();
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let m = T::of((n * inner) as f64);
        if is_grad_enabled() {
            // Differentiable form for higher-order gradients:
            // dx = inv * (g - mean(g) - xhat * mean(g * xhat)).
            let rm = T::one() / m;
            let gm = channel_broadcast(&ops::scale(&channel_sum(g, false)?, rm), shape)?;
            let gx = channel_broadcast(&ops::scale(&channel_sum(&mul(g, out)?, false)?, rm), shape)?;
            let centered = sub(&sub(g, &gm)?, &mul(out, &gx)?)?;
            let mu = ops::scale(&channel_sum(x, false)?, rm);
            let xc = sub(x, &channel_broadcast(&mu, shape)?)?;
            let var = ops::scale(&channel_sum(&ops::square(&xc), false)?, rm);
            let inv = ops::powf(&ops::add_scalar(&var, T::of(BN_EPS)), T::of(-0.5));
            return Ok(vec![Some(channel_affine(&centered, Some(&inv), None)?)]);
        }
        let (gd, xh) = (g.value().data(), out.value().data());
        let mut sg = vec![T::zero(); c];
        let mut sgx = vec![T::zero(); c];
        for ni in 0..n {
            for ci in 0..c {
                let r = (ni * c + ci) * inner..(ni * c + ci + 1) * inner;
                for (a, b) in gd[r.clone()].iter().zip(&xh[r]) {
                    sg[ci] += *a;
                    sgx[ci] += *a * *b;
                }
            }
        }
        let mut dx = vec![T::zero(); gd.len()];
        for ni in 0..n {
            for ci in 0..c {
                let (mg, mgx, inv) = (sg[ci] / m, sgx[ci] / m, self.inv[ci]);
                let r = (ni * c + ci) * inner..(ni * c + ci + 1) * inner;
                for ((d, a), b) in dx[r.clone()].iter_mut().zip(&gd[r.clone()]).zip(&xh[r]) {
                    *d = inv * (*a - mg - *b * mgx);
                }
            }
        }
        Ok(vec![Some(Var::constant(Tensor::new(shape.to_vec(), dx)?))])
    }
}

/// Per-channel standardization of `x[N, C, ...]` without affine parameters.
pub fn standardize<T: Scalar>(x: &Var<T>, stats: &mut RunningStats<T>, mode: NormMode) -> Result<Var<T>> {
    let shape = x.shape().to_vec();
    if shape.len() < 2 {
        return config(format!("batch norm needs [N, C, ...], got {shape:?}"));
    }
    let (n, c) = (shape[0], shape[1]);
    if stats.channels() != c {
        return config(format!("running stats hold {} channels, input has {c}", stats.channels()));
    }
    let inner: usize = shape[2..].iter().product();
    let eps = T::of(BN_EPS);
    match mode {
        NormMode::Train { update_stats } => {
            if n < 2 {
                return Err(GradError::DegenerateBatch(n));
            }
            let d = x.value().data();
            let m = T::of((n * inner) as f64);
            let mut mean = vec![T::zero(); c];
            for ni in 0..n {
                for ci in 0..c {
                    mean[ci] += d[(ni * c + ci) * inner..(ni * c + ci + 1) * inner].iter().copied().sum::<T>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            let mut var = vec![T::zero(); c];
            for ni in 0..n {
                for ci in 0..c {
                    let mu = mean[ci];
                    var[ci] += d[(ni * c + ci) * inner..(ni * c + ci + 1) * inner]
                        .iter()
                        .map(|&v| (v - mu) * (v - mu))
                        .sum::<T>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let mut out = vec![T::zero(); d.len()];
            for ni in 0..n {
                for ci in 0..c {
                    let (mu, iv) = (mean[ci], inv[ci]);
                    let r = (ni * c + ci) * inner..(ni * c + ci + 1) * inner;
                    for (o, &v) in out[r.clone()].iter_mut().zip(&d[r]) {
                        *o = (v - mu) * iv;
                    }
                }
            }
            if update_stats {
                let k = T::of(BN_MOMENTUM);
                let unbias = if m > T::one() { m / (m - T::one()) } else { T::one() };
                for ch in 0..c {
                    stats.mean[ch] = k * stats.mean[ch] + (T::one() - k) * mean[ch];
                    stats.var[ch] = k * stats.var[ch] + (T::one() - k) * var[ch] * unbias;
                }
            }
            Ok(Var::from_op(Tensor::new(shape, out)?, StandardizeOp { inv }, vec![x.clone()]))
        }
        NormMode::Eval => {
            let inv: Vec<T> = stats.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let shift: Vec<T> = stats.mean.iter().zip(&inv).map(|(&m, &i)| -m * i).collect();
            let inv = Var::constant(Tensor::new(vec![c], inv)?);
            let shift = Var::constant(Tensor::new(vec![c], shift)?);
            channel_affine(x, Some(&inv), Some(&shift))
        }
    }
}

/// `gamma * standardize(x) + beta` with per-channel `gamma`, `beta` of shape `[C]`.
pub fn batch_norm<T: Scalar>(
    x: &Var<T>,
    gamma: &Var<T>,
    beta: &Var<T>,
    stats: &mut RunningStats<T>,
    mode: NormMode,
) -> Result<Var<T>> {
    let xhat = standardize(x, stats, mode)?;
    let c = x.shape()[1];
    if gamma.shape() != [c] || beta.shape() != [c] {
        return config(format!("gamma/beta must be [{c}]"));
    }
    channel_affine(&xhat, Some(gamma), Some(beta))
}

/// Batch norm whose affine parameters are projections of a latent vector:
/// `gamma = 1 + z W_g^T`, `beta = z W_b^T`, with `z[N, d]` and `W[C, d]`.
pub fn conditional_batch_norm<T: Scalar>(
    x: &Var<T>,
    latent: &Var<T>,
    w_gamma: &Var<T>,
    w_beta: &Var<T>,
    stats: &mut RunningStats<T>,
    mode: NormMode,
) -> Result<Var<T>> {
    let shape = x.shape().to_vec();
    if shape.len() < 2 {
        return config(format!("batch norm needs [N, C, ...], got {shape:?}"));
    }
    let (n, c) = (shape[0], shape[1]);
    let ls = latent.shape();
    if ls.len() != 2 || ls[0] != n {
        return config(format!("latent must be [{n}, d], got {ls:?}"));
    }
    let d = ls[1];
    if w_gamma.shape() != [c, d] || w_beta.shape() != [c, d] {
        return config(format!("projections must be [{c}, {d}]"));
    }
    let xhat = standardize(x, stats, mode)?;
    let gamma = ops::add_scalar(&matmul(latent, &transpose(w_gamma)?)?, T::one());
    let beta = matmul(latent, &transpose(w_beta)?)?;
    channel_affine(&xhat, Some(&gamma), Some(&beta))
}
