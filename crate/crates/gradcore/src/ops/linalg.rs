use crate::error::{config, Result};
use crate::scalar::{gemm, Scalar, Trans};
use crate::tensor::Tensor;
use crate::var::{BackwardOp, Var};

struct MatmulOp;
impl<T: Scalar> BackwardOp<T> for MatmulOp {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, needs: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let ga = if needs[0] { Some(matmul(g, &transpose(&inp[1])?)?) } else { None };
        let gb = if needs[1] { Some(matmul(&transpose(&inp[0])?, g)?) } else { None };
        Ok(vec![ga, gb])
    }
}

/// `[m, k] x [k, n] -> [m, n]`.
pub fn matmul<T: Scalar>(a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return config(format!("matmul: {sa:?} x {sb:?}"));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut c = vec![T::zero(); m * n];
    gemm(m, k, n, T::one(), a.value().data(), Trans::No, b.value().data(), Trans::No, T::zero(), &mut c);
    Ok(Var::from_op(Tensor::new(vec![m, n], c)?, MatmulOp, vec![a.clone(), b.clone()]))
}

struct TransposeOp;
impl<T: Scalar> BackwardOp<T> for TransposeOp {
    fn name(&self) -> &'static str {
        "transpose"
    }
    fn backward(&self, _: &[Var<T>], _: &Var<T>, g: &Var<T>, _: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        Ok(vec![Some(transpose(g)?)])
    }
}

pub fn transpose<T: Scalar>(x: &Var<T>) -> Result<Var<T>> {
    let s = x.shape();
    if s.len() != 2 {
        return config(format!("transpose needs a matrix, got {s:?}"));
    }
    let (r, c) = (s[0], s[1]);
    let d = x.value().data();
    let t = Tensor::from_fn(vec![c, r], |i| d[(i % r) * c + i / r]);
    Ok(Var::from_op(t, TransposeOp, vec![x.clone()]))
}
