use crate::error::{config, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::var::{BackwardOp, Var};

fn check5<T: Scalar>(x: &Var<T>, what: &str) -> Result<[usize; 5]> {
    let s = x.shape();
    if s.len() != 5 {
        return config(format!("{what}: expected [N,C,X,Y,Z], got {s:?}"));
    }
    Ok([s[0], s[1], s[2], s[3], s[4]])
}

struct UpsampleOp([usize; 3]);
impl<T: Scalar> BackwardOp<T> for UpsampleOp {
    fn name(&self) -> &'static str {
        "upsample_nearest"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(sum_pool(g, self.0)?)])
    }
}

/// Nearest-neighbour upsampling by integer factors per spatial axis.
pub fn upsample_nearest<T: Scalar>(x: &Var<T>, f: [usize; 3]) -> Result<Var<T>> {
    let [n, c, a, b, d] = check5(x, "upsample")?;
    if f.contains(&0) {
        return config("upsample factors must be >= 1");
    }
    if f == [1, 1, 1] {
        return Ok(x.clone());
    }
    let (oa, ob, od) = (a * f[0], b * f[1], d * f[2]);
    let src = x.value().data();
    let mut out = vec![T::zero(); n * c * oa * ob * od];
    for nc in 0..n * c {
        let s = &src[nc * a * b * d..];
        let o = &mut out[nc * oa * ob * od..(nc + 1) * oa * ob * od];
        for i in 0..oa {
            for j in 0..ob {
                let srow = &s[((i / f[0]) * b + j / f[1]) * d..];
                let orow = &mut o[(i * ob + j) * od..(i * ob + j + 1) * od];
                for (k, v) in orow.iter_mut().enumerate() {
                    *v = srow[k / f[2]];
                }
            }
        }
    }
    let y = Tensor::new(vec![n, c, oa, ob, od], out)?;
    Ok(Var::from_op(y, UpsampleOp(f), vec![x.clone()]))
}

struct SumPoolOp([usize; 3]);
impl<T: Scalar> BackwardOp<T> for SumPoolOp {
    fn name(&self) -> &'static str {
        "sum_pool"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(upsample_nearest(g, self.0)?)])
    }
}

/// Sums non-overlapping blocks of `f` cells; extents must be divisible.
pub fn sum_pool<T: Scalar>(x: &Var<T>, f: [usize; 3]) -> Result<Var<T>> {
    let [n, c, a, b, d] = check5(x, "pool")?;
    if f.contains(&0) || a % f[0] != 0 || b % f[1] != 0 || d % f[2] != 0 {
        return config(format!("pool factors {f:?} do not divide extents {:?}", &x.shape()[2..]));
    }
    if f == [1, 1, 1] {
        return Ok(x.clone());
    }
    let (oa, ob, od) = (a / f[0], b / f[1], d / f[2]);
    let src = x.value().data();
    let mut out = vec![T::zero(); n * c * oa * ob * od];
    for nc in 0..n * c {
        let s = &src[nc * a * b * d..(nc + 1) * a * b * d];
        let o = &mut out[nc * oa * ob * od..];
        for i in 0..a {
            for j in 0..b {
                let srow = &s[(i * b + j) * d..(i * b + j + 1) * d];
                let obase = ((i / f[0]) * ob + j / f[1]) * od;
                for (k, &v) in srow.iter().enumerate() {
                    o[obase + k / f[2]] += v;
                }
            }
        }
    }
    let y = Tensor::new(vec![n, c, oa, ob, od], out)?;
    Ok(Var::from_op(y, SumPoolOp(f), vec![x.clone()]))
}

pub fn avg_pool<T: Scalar>(x: &Var<T>, f: [usize; 3]) -> Result<Var<T>> {
    let vol = T::of((f[0] * f[1] * f[2]) as f64);
    Ok(crate::ops::scale(&sum_pool(x, f)?, T::one() / vol))
}
