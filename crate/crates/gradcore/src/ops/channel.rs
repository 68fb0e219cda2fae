//! Fused per-channel operations on `[N, C, ...]` tensors.
//!
//! Channel parameters are either shared across the batch (`[C]`) or given
//! per item (`[N, C]`).

use crate::error::{config, Result};
use crate::ops::mul;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::var::{BackwardOp, Var};

fn split(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return config(format!("channel op needs [N, C, ...], got {shape:?}"));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

/// Whether `p` is per item, after checking it against `[N, C]` / `[C]`.
fn per_item(p: &[usize], n: usize, c: usize) -> Result<bool> {
    if p == [c] {
        Ok(false)
    } else if p == [n, c] {
        Ok(true)
    } else {
        config(format!("channel parameter {p:?} must be [{c}] or [{n}, {c}]"))
    }
}

struct AffineOp {
    has_scale: bool,
    scale_per_item: bool,
    shift_per_item: bool,
}

impl<T: Scalar> BackwardOp<T> for AffineOp {
    fn name(&self) -> &'static str {
        "channel_affine"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, needs: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let x = &inp[0];
        let mut out = Vec::with_capacity(inp.len());
        out.push(if !needs[0] {
            None
        } else if self.has_scale {
            Some(channel_affine(g, Some(&inp[1]), None)?)
        } else {
            Some(g.clone())
        });
        let mut i = 1;
        if self.has_scale {
            out.push(if needs[i] { Some(channel_sum(&mul(g, x)?, self.scale_per_item)?) } else { None });
            i += 1;
        }
        if i < inp.len() {
            out.push(if needs[i] { Some(channel_sum(g, self.shift_per_item)?) } else { None });
        }
        Ok(out)
    }
}

/// `x * scale + shift` with per-channel (or per item and channel) factors.
pub fn channel_affine<T: Scalar>(x: &Var<T>, scale: Option<&Var<T>>, shift: Option<&Var<T>>) -> Result<Var<T>> {
    let (n, c, inner) = split(x.shape())?;
    let sp = scale.map(|s| per_item(s.shape(), n, c)).transpose()?.unwrap_or(false);
    let hp = shift.map(|s| per_item(s.shape(), n, c)).transpose()?.unwrap_or(false);
    let mut v = x.value().clone();
    let data = v.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let a = scale.map(|s| s.value().data()[if sp { ni * c + ci } else { ci }]);
            let b = shift.map(|s| s.value().data()[if hp { ni * c + ci } else { ci }]);
            let blk = &mut data[(ni * c + ci) * inner..(ni * c + ci + 1) * inner];
            match (a, b) {
                (Some(a), Some(b)) => blk.iter_mut().for_each(|v| *v = *v * a + b),
                (Some(a), None) => blk.iter_mut().for_each(|v| *v *= a),
                (None, Some(b)) => blk.iter_mut().for_each(|v| *v += b),
                (None, None) => {}
            }
        }
    }
    let mut inputs = vec![x.clone()];
    inputs.extend(scale.cloned());
    inputs.extend(shift.cloned());
    let op = AffineOp { has_scale: scale.is_some(), scale_per_item: sp, shift_per_item: hp };
    Ok(Var::from_op(v, op, inputs))
}

struct SumOp {
    per_item: bool,
}

impl<T: Scalar> BackwardOp<T> for SumOp {
    fn name(&self) -> &'static str {
        "channel_sum"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let _ = self.per_item;
        Ok(vec![Some(channel_broadcast(g, inp[0].shape())?)])
    }
}

/// Sum over everything but the channel axis (`[C]`), or over the spatial
/// axes only (`[N, C]`) when `per_item`.
pub fn channel_sum<T: Scalar>(x: &Var<T>, per_item: bool) -> Result<Var<T>> {
    let (n, c, inner) = split(x.shape())?;
    let d = x.value().data();
    let shape = if per_item { vec![n, c] } else { vec![c] };
    let mut out = vec![T::zero(); if per_item { n * c } else { c }];
    for ni in 0..n {
        for ci in 0..c {
            let s: T = d[(ni * c + ci) * inner..(ni * c + ci + 1) * inner].iter().copied().sum();
            out[if per_item { ni * c + ci } else { ci }] += s;
        }
    }
    Ok(Var::from_op(Tensor::new(shape, out)?, SumOp { per_item }, vec![x.clone()]))
}

struct BroadcastOp {
    per_item: bool,
}

impl<T: Scalar> BackwardOp<T> for BroadcastOp {
    fn name(&self) -> &'static str {
        "channel_broadcast"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(channel_sum(g, self.per_item)?)])
    }
}

/// Expands `[C]` or `[N, C]` channel values over `shape = [N, C, ...]`.
pub fn channel_broadcast<T: Scalar>(v: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
    let (n, c, inner) = split(shape)?;
    let pi = per_item(v.shape(), n, c)?;
    let src = v.value().data();
    let mut out = Vec::with_capacity(n * c * inner);
    for ni in 0..n {
        for ci in 0..c {
            let val = src[if pi { ni * c + ci } else { ci }];
            out.extend(std::iter::repeat_n(val, inner));
        }
    }
    Ok(Var::from_op(Tensor::new(shape.to_vec(), out)?, BroadcastOp { per_item: pi }, vec![v.clone()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{add, broadcast_to, reshape, sum_to};
    use rand::SeedableRng;

    #[test]
    fn matches_broadcast_composition() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Var::constant(Tensor::<f64>::randn(vec![3, 4, 2, 3, 1], &mut rng));
        let a = Var::constant(Tensor::<f64>::randn(vec![4], &mut rng));
        let b = Var::constant(Tensor::<f64>::randn(vec![3, 4], &mut rng));
        let got = channel_affine(&x, Some(&a), Some(&b)).unwrap();
        let ab = broadcast_to(&reshape(&a, &[1, 4, 1, 1, 1]).unwrap(), x.shape()).unwrap();
        let bb = broadcast_to(&reshape(&b, &[3, 4, 1, 1, 1]).unwrap(), x.shape()).unwrap();
        let want = add(&mul(&x, &ab).unwrap(), &bb).unwrap();
        assert_eq!(got.value(), want.value());
        let s = channel_sum(&x, false).unwrap();
        let w = sum_to(&x, &[1, 4, 1, 1, 1]).unwrap();
        for (p, q) in s.value().data().iter().zip(w.value().data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameter_shape() {
        let x = Var::constant(Tensor::<f64>::zeros(vec![2, 3, 1, 1, 1]));
        let a = Var::constant(Tensor::<f64>::zeros(vec![2]));
        assert!(channel_affine(&x, Some(&a), None).is_err());
    }
}
