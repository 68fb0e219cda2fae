use crate::error::{config, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};
use crate::var::{BackwardOp, Var};

/// Axis plan pairing a full shape with a broadcastable one (same rank,
/// each small extent equal to the full one or 1). Adjacent axes with equal
/// broadcast status are merged so inner loops run over long contiguous runs.
struct BroadcastPlan {
    dims: Vec<usize>,
    small_strides: Vec<usize>,
}

impl BroadcastPlan {
    fn new(big: &[usize], small: &[usize]) -> Result<Self> {
        if big.len() != small.len() {
            return config(format!("broadcast: rank of {small:?} differs from {big:?}"));
        }
        let mut dims: Vec<usize> = Vec::new();
        let mut kept: Vec<bool> = Vec::new();
        for (&b, &s) in big.iter().zip(small) {
            if s != b && s != 1 {
                return config(format!("broadcast: {small:?} is not broadcastable to {big:?}"));
            }
            if b == 1 {
                continue;
            }
            let k = s == b;
            if kept.last() == Some(&k) {
                *dims.last_mut().unwrap() *= b;
            } else {
                dims.push(b);
                kept.push(k);
            }
        }
        if dims.is_empty() {
            dims.push(1);
            kept.push(true);
        }
        let mut small_strides = vec![0; dims.len()];
        let mut acc = 1;
        for i in (0..dims.len()).rev() {
            if kept[i] {
                small_strides[i] = acc;
                acc *= dims[i];
            }
        }
        Ok(Self { dims, small_strides })
    }

    /// Calls `f(big_offset, small_offset, run_len, small_advances)` for each inner run.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, bool)) {
        let nd = self.dims.len();
        let inner = self.dims[nd - 1];
        let inner_kept = self.small_strides[nd - 1] == 1;
        let outer: usize = self.dims[..nd - 1].iter().product();
        let mut idx = vec![0usize; nd - 1];
        let mut small_off = 0usize;
        for row in 0..outer {
            f(row * inner, small_off, inner, inner_kept);
            // odometer increment
            for ax in (0..nd - 1).rev() {
                idx[ax] += 1;
                small_off += self.small_strides[ax];
                if idx[ax] < self.dims[ax] {
                    break;
                }
                small_off -= self.small_strides[ax] * self.dims[ax];
                idx[ax] = 0;
            }
        }
    }
}

fn sum_to_value<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    let plan = BroadcastPlan::new(x.shape(), shape)?;
    let mut out = Tensor::zeros(shape.to_vec());
    let src = x.data();
    let dst = out.data_mut();
    plan.for_each_run(|b, s, len, adv| {
        if adv {
            for (d, &v) in dst[s..s + len].iter_mut().zip(&src[b..b + len]) {
                *d += v;
            }
        } else {
            let run: T = src[b..b + len].iter().copied().sum();
            dst[s] += run;
        }
    });
    Ok(out)
}

fn broadcast_value<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    let plan = BroadcastPlan::new(shape, x.shape())?;
    let mut out = Tensor::zeros(shape.to_vec());
    let src = x.data();
    let dst = out.data_mut();
    plan.for_each_run(|b, s, len, adv| {
        if adv {
            dst[b..b + len].copy_from_slice(&src[s..s + len]);
        } else {
            dst[b..b + len].fill(src[s]);
        }
    });
    Ok(out)
}

struct SumToOp(Vec<usize>);
impl<T: Scalar> BackwardOp<T> for SumToOp {
    fn name(&self) -> &'static str {
        "sum_to"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(broadcast_to(g, &self.0)?)])
    }
}

/// Sums over the axes where `shape` has extent 1 (rank is preserved).
pub fn sum_to<T: Scalar>(x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
    let v = sum_to_value(x.value(), shape)?;
    Ok(Var::from_op(v, SumToOp(x.shape().to_vec()), vec![x.clone()]))
}

struct BroadcastToOp(Vec<usize>);
impl<T: Scalar> BackwardOp<T> for BroadcastToOp {
    fn name(&self) -> &'static str {
        "broadcast_to"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(sum_to(g, &self.0)?)])
    }
}

/// Repeats along axes of extent 1 to reach `shape` (same rank).
pub fn broadcast_to<T: Scalar>(x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
    let v = broadcast_value(x.value(), shape)?;
    Ok(Var::from_op(v, BroadcastToOp(x.shape().to_vec()), vec![x.clone()]))
}

struct SumAllOp(Vec<usize>);
impl<T: Scalar> BackwardOp<T> for SumAllOp {
    fn name(&self) -> &'static str {
        "sum_all"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(broadcast_scalar(g, &self.0)?)])
    }
}

/// Sum of all elements as a rank-0 tensor.
pub fn sum_all<T: Scalar>(x: &Var<T>) -> Var<T> {
    Var::from_op(Tensor::scalar(x.value().sum()), SumAllOp(x.shape().to_vec()), vec![x.clone()])
}

pub fn mean_all<T: Scalar>(x: &Var<T>) -> Var<T> {
    let n = T::of(x.value().len().max(1) as f64);
    crate::ops::scale(&sum_all(x), T::one() / n)
}

struct BroadcastScalarOp;
impl<T: Scalar> BackwardOp<T> for BroadcastScalarOp {
    fn name(&self) -> &'static str {
        "broadcast_scalar"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(sum_all(g))])
    }
}

/// Fills `shape` with the value of a single-element tensor.
pub fn broadcast_scalar<T: Scalar>(x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
    if x.value().len() != 1 {
        return config(format!("broadcast_scalar: input shape {:?}", x.shape()));
    }
    if x.ndim() != 0 {
        let g = reshape(x, &[])?;
        return broadcast_scalar(&g, shape);
    }
    Ok(Var::from_op(Tensor::full(shape.to_vec(), x.item()), BroadcastScalarOp, vec![x.clone()]))
}

struct ReshapeOp(Vec<usize>);
impl<T: Scalar> BackwardOp<T> for ReshapeOp {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(reshape(g, &self.0)?)])
    }
}

pub fn reshape<T: Scalar>(x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
    if numel(shape) != x.value().len() {
        return config(format!("reshape: {:?} into {:?}", x.shape(), shape));
    }
    let v = x.value().clone().reshape(shape.to_vec())?;
    Ok(Var::from_op(v, ReshapeOp(x.shape().to_vec()), vec![x.clone()]))
}

impl<T: Scalar> Var<T> {
    pub fn ndim(&self) -> usize {
        self.shape().len()
    }
}
