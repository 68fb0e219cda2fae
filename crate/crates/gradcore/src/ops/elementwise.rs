use crate::error::{config, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::var::{BackwardOp, Var};

fn same_shape<T: Scalar>(op: &str, a: &Var<T>, b: &Var<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return config(format!("{op}: shape {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

struct AddOp;
impl<T: Scalar> BackwardOp<T> for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(g.clone()), Some(g.clone())])
    }
}

pub fn add<T: Scalar>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    same_shape("add", a, b)?;
    let v = a.value().zip_map(b.value(), |x, y| x + y);
    Ok(Var::from_op(v, AddOp, vec![a.clone(), b.clone()]))
}

struct SubOp;
impl<T: Scalar> BackwardOp<T> for SubOp {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, needs: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(g.clone()), needs[1].then(|| neg(g))])
    }
}

pub fn sub<T: Scalar>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    same_shape("sub", a, b)?;
    let v = a.value().zip_map(b.value(), |x, y| x - y);
    Ok(Var::from_op(v, SubOp, vec![a.clone(), b.clone()]))
}

struct MulOp;
impl<T: Scalar> BackwardOp<T> for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, needs: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let ga = if needs[0] { Some(mul(g, &inp[1])?) } else { None };
        let gb = if needs[1] { Some(mul(g, &inp[0])?) } else { None };
        Ok(vec![ga, gb])
    }
}

pub fn mul<T: Scalar>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    same_shape("mul", a, b)?;
    let v = a.value().zip_map(b.value(), |x, y| x * y);
    Ok(Var::from_op(v, MulOp, vec![a.clone(), b.clone()]))
}

struct ScaleOp<T>(T);
impl<T: Scalar> BackwardOp<T> for ScaleOp<T> {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(scale(g, self.0))])
    }
}

/// Multiplies by a constant.
pub fn scale<T: Scalar>(x: &Var<T>, c: T) -> Var<T> {
    Var::from_op(x.value().map(|v| v * c), ScaleOp(c), vec![x.clone()])
}

pub fn neg<T: Scalar>(x: &Var<T>) -> Var<T> {
    scale(x, -T::one())
}

struct AddScalarOp;
impl<T: Scalar> BackwardOp<T> for AddScalarOp {
    fn name(&self) -> &'static str {
        "add_scalar"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(g.clone())])
    }
}

pub fn add_scalar<T: Scalar>(x: &Var<T>, c: T) -> Var<T> {
    Var::from_op(x.value().map(|v| v + c), AddScalarOp, vec![x.clone()])
}

struct SquareOp;
impl<T: Scalar> BackwardOp<T> for SquareOp {
    fn name(&self) -> &'static str {
        "square"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(scale(&mul(g, &inp[0])?, T::of(2.0)))])
    }
}

pub fn square<T: Scalar>(x: &Var<T>) -> Var<T> {
    Var::from_op(x.value().map(|v| v * v), SquareOp, vec![x.clone()])
}

struct PowOp<T>(T);
impl<T: Scalar> BackwardOp<T> for PowOp<T> {
    fn name(&self) -> &'static str {
        "powf"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let d = scale(&powf(&inp[0], self.0 - T::one()), self.0);
        Ok(vec![Some(mul(g, &d)?)])
    }
}

/// `x^p` for a constant exponent.
pub fn powf<T: Scalar>(x: &Var<T>, p: T) -> Var<T> {
    Var::from_op(x.value().map(|v| v.powf(p)), PowOp(p), vec![x.clone()])
}

struct ExpOp;
impl<T: Scalar> BackwardOp<T> for ExpOp {
    fn name(&self) -> &'static str {
        "exp"
    }
    fn backward(&self, _: &[Var<T>], out: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(mul(g, out)?)])
    }
}

pub fn exp<T: Scalar>(x: &Var<T>) -> Var<T> {
    Var::from_op(x.value().map(|v| v.exp()), ExpOp, vec![x.clone()])
}

struct LnOp;
impl<T: Scalar> BackwardOp<T> for LnOp {
    fn name(&self) -> &'static str {
        "ln"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(mul(g, &powf(&inp[0], -T::one()))?)])
    }
}

/// Natural logarithm. Callers clamp the argument away from zero.
pub fn ln<T: Scalar>(x: &Var<T>) -> Var<T> {
    Var::from_op(x.value().map(|v| v.ln()), LnOp, vec![x.clone()])
}

struct TanhOp;
impl<T: Scalar> BackwardOp<T> for TanhOp {
    fn name(&self) -> &'static str {
        "tanh"
    }
    fn backward(&self, _: &[Var<T>], out: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let d = add_scalar(&neg(&square(out)), T::one());
        Ok(vec![Some(mul(g, &d)?)])
    }
}

pub fn tanh<T: Scalar>(x: &Var<T>) -> Var<T> {
    Var::from_op(x.value().map(|v| v.tanh()), TanhOp, vec![x.clone()])
}

pub(crate) fn sigmoid_value<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

struct SigmoidOp;
impl<T: Scalar> BackwardOp<T> for SigmoidOp {
    fn name(&self) -> &'static str {
        "sigmoid"
    }
    fn backward(&self, _: &[Var<T>], out: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let d = mul(out, &add_scalar(&neg(out), T::one()))?;
        Ok(vec![Some(mul(g, &d)?)])
    }
}

pub fn sigmoid<T: Scalar>(x: &Var<T>) -> Var<T> {
    Var::from_op(x.value().map(sigmoid_value), SigmoidOp, vec![x.clone()])
}

struct SoftplusOp;
impl<T: Scalar> BackwardOp<T> for SoftplusOp {
    fn name(&self) -> &'static str {
        "softplus"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(mul(g, &sigmoid(&inp[0]))?)])
    }
}

/// `ln(1 + e^x)` evaluated as `max(x, 0) + ln(1 + e^-|x|)`.
pub fn softplus<T: Scalar>(x: &Var<T>) -> Var<T> {
    let v = x.value().map(|v| v.max(T::zero()) + (-v.abs()).exp().ln_1p());
    Var::from_op(v, SoftplusOp, vec![x.clone()])
}

struct MaskMulOp<T> {
    mask: Tensor<T>,
    name: &'static str,
}
impl<T: Scalar> BackwardOp<T> for MaskMulOp<T> {
    fn name(&self) -> &'static str {
        self.name
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(mask_mul(g, &self.mask)?)])
    }
}

/// Multiplies by a constant tensor of the same shape.
pub fn mask_mul<T: Scalar>(x: &Var<T>, mask: &Tensor<T>) -> Result<Var<T>> {
    if x.shape() != mask.shape() {
        return config(format!("mask_mul: shape {:?} vs {:?}", x.shape(), mask.shape()));
    }
    let v = x.value().zip_map(mask, |a, m| a * m);
    Ok(Var::from_op(v, MaskMulOp { mask: mask.clone(), name: "mask_mul" }, vec![x.clone()]))
}

/// `x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu<T: Scalar>(x: &Var<T>, slope: T) -> Var<T> {
    let mask = x.value().map(|v| if v >= T::zero() { T::one() } else { slope });
    let v = x.value().zip_map(&mask, |a, m| a * m);
    Var::from_op(v, MaskMulOp { mask, name: "leaky_relu" }, vec![x.clone()])
}

pub fn relu<T: Scalar>(x: &Var<T>) -> Var<T> {
    let mask = x.value().map(|v| if v > T::zero() { T::one() } else { T::zero() });
    let v = x.value().zip_map(&mask, |a, m| a * m);
    Var::from_op(v, MaskMulOp { mask, name: "relu" }, vec![x.clone()])
}

/// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
pub fn clamp<T: Scalar>(x: &Var<T>, lo: T, hi: T) -> Var<T> {
    let mask = x.value().map(|v| if v >= lo && v <= hi { T::one() } else { T::zero() });
    let v = x.value().map(|v| v.max(lo).min(hi));
    Var::from_op(v, MaskMulOp { mask, name: "clamp" }, vec![x.clone()])
}
