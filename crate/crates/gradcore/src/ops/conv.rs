use crate::error::{config, Result};
use crate::kernels;
use crate::ops::reshape;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::var::{BackwardOp, Var};

/// Geometry of a forward 3D cross-correlation `[N, c_in, in] -> [N, c_out, out]`.
///
/// A transposed convolution is the adjoint of a forward one, so it is
/// described by the geometry of the forward convolution it inverts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub in_ext: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub out_ext: [usize; 3],
}

impl ConvGeom {
    /// Forward geometry; `out = floor((in + 2 pad - k) / stride) + 1` per axis.
    pub fn forward(
        c_in: usize,
        c_out: usize,
        in_ext: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        check_params(c_in, c_out, kernel, stride)?;
        let mut out_ext = [0; 3];
        for d in 0..3 {
            let padded = in_ext[d] + 2 * pad[d];
            if padded < kernel[d] {
                return config(format!(
                    "axis {d}: padded extent {padded} smaller than kernel {}",
                    kernel[d]
                ));
            }
            out_ext[d] = (padded - kernel[d]) / stride[d] + 1;
        }
        Ok(Self { c_in, c_out, in_ext, kernel, stride, pad, out_ext })
    }

    /// Geometry for a transposed convolution taking `[N, c_in_t, in_t]` to
    /// `[N, c_out_t, (in_t - 1) stride - 2 pad + k]`.
    pub fn transposed(
        c_in_t: usize,
        c_out_t: usize,
        in_ext_t: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        check_params(c_in_t, c_out_t, kernel, stride)?;
        let mut out = [0; 3];
        for d in 0..3 {
            if in_ext_t[d] == 0 {
                return config(format!("axis {d}: empty input"));
            }
            let full = (in_ext_t[d] - 1) * stride[d] + kernel[d];
            if full <= 2 * pad[d] {
                return config(format!("axis {d}: transposed output extent would be non-positive"));
            }
            out[d] = full - 2 * pad[d];
        }
        let g = Self::forward(c_out_t, c_in_t, out, kernel, stride, pad)?;
        if g.out_ext != in_ext_t {
            return config(format!("transposed geometry does not invert: {:?} vs {:?}", g.out_ext, in_ext_t));
        }
        Ok(g)
    }

    pub fn kvol(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn in_vol(&self) -> usize {
        self.in_ext.iter().product()
    }

    pub fn out_vol(&self) -> usize {
        self.out_ext.iter().product()
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.c_out, self.c_in, self.kernel[0], self.kernel[1], self.kernel[2]]
    }

    pub fn input_shape(&self, n: usize) -> Vec<usize> {
        vec![n, self.c_in, self.in_ext[0], self.in_ext[1], self.in_ext[2]]
    }

    pub fn output_shape(&self, n: usize) -> Vec<usize> {
        vec![n, self.c_out, self.out_ext[0], self.out_ext[1], self.out_ext[2]]
    }

    /// Multiply-accumulates of one forward pass per batch item.
    pub fn macs(&self) -> usize {
        self.c_out * self.c_in * self.kvol() * self.out_vol()
    }
}

fn check_params(c_in: usize, c_out: usize, kernel: [usize; 3], stride: [usize; 3]) -> Result<()> {
    if c_in == 0 || c_out == 0 {
        return config("channel counts must be positive");
    }
    if kernel.contains(&0) {
        return config(format!("kernel extents must be >= 1, got {kernel:?}"));
    }
    if stride.contains(&0) {
        return config(format!("strides must be >= 1, got {stride:?}"));
    }
    Ok(())
}

fn batch_of(shape: &[usize], expect: &[usize], what: &str) -> Result<usize> {
    if shape.len() != 5 || shape[1..] != expect[1..] {
        return config(format!("{what}: expected [N, {:?}], got {:?}", &expect[1..], shape));
    }
    Ok(shape[0])
}

fn check_weight<T: Scalar>(w: &Var<T>, g: &ConvGeom) -> Result<()> {
    if w.shape() != g.weight_shape().as_slice() {
        return config(format!("weight shape {:?}, geometry needs {:?}", w.shape(), g.weight_shape()));
    }
    Ok(())
}

struct ConvForwardOp(ConvGeom);
impl<T: Scalar> BackwardOp<T> for ConvForwardOp {
    fn name(&self) -> &'static str {
        "conv3d"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, needs: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let dx = if needs[0] { Some(conv_input_grad(g, &inp[1], &self.0)?) } else { None };
        let dw = if needs[1] { Some(conv_weight_grad(&inp[0], g, &self.0)?) } else { None };
        Ok(vec![dx, dw])
    }
}

/// Raw cross-correlation of a batched input with weight `[c_out, c_in, k...]`.
pub fn conv_forward<T: Scalar>(x: &Var<T>, w: &Var<T>, g: &ConvGeom) -> Result<Var<T>> {
    let n = batch_of(x.shape(), &g.input_shape(1), "conv input")?;
    check_weight(w, g)?;
    let y = kernels::conv_f(x.value().data(), w.value().data(), g, n);
    let y = Tensor::new(g.output_shape(n), y)?;
    Ok(Var::from_op(y, ConvForwardOp(g.clone()), vec![x.clone(), w.clone()]))
}

struct ConvInputGradOp(ConvGeom);
impl<T: Scalar> BackwardOp<T> for ConvInputGradOp {
    fn name(&self) -> &'static str {
        "conv3d_transposed"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, needs: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let dy = if needs[0] { Some(conv_forward(g, &inp[1], &self.0)?) } else { None };
        let dw = if needs[1] { Some(conv_weight_grad(g, &inp[0], &self.0)?) } else { None };
        Ok(vec![dy, dw])
    }
}

/// Adjoint of [`conv_forward`] in its input; this is the transposed convolution.
pub fn conv_input_grad<T: Scalar>(gy: &Var<T>, w: &Var<T>, g: &ConvGeom) -> Result<Var<T>> {
    let n = batch_of(gy.shape(), &g.output_shape(1), "transposed conv input")?;
    check_weight(w, g)?;
    let x = kernels::conv_t(gy.value().data(), w.value().data(), g, n);
    let x = Tensor::new(g.input_shape(n), x)?;
    Ok(Var::from_op(x, ConvInputGradOp(g.clone()), vec![gy.clone(), w.clone()]))
}

struct ConvWeightGradOp(ConvGeom);
impl<T: Scalar> BackwardOp<T> for ConvWeightGradOp {
    fn name(&self) -> &'static str {
        "conv3d_weight_grad"
    }
    fn backward(&self, inp: &[Var<T>], _: &Var<T>, g: &Var<T>, needs: &[bool]) -> Result<Vec<Option<Var<T>>>> {
        let dx = if needs[0] { Some(conv_input_grad(&inp[1], g, &self.0)?) } else { None };
        let dgy = if needs[1] { Some(conv_forward(&inp[0], g, &self.0)?) } else { None };
        Ok(vec![dx, dgy])
    }
}

/// Adjoint of [`conv_forward`] in its weight.
pub fn conv_weight_grad<T: Scalar>(x: &Var<T>, gy: &Var<T>, g: &ConvGeom) -> Result<Var<T>> {
    let n = batch_of(x.shape(), &g.input_shape(1), "conv input")?;
    let m = batch_of(gy.shape(), &g.output_shape(1), "conv output grad")?;
    if n != m {
        return config(format!("batch mismatch {n} vs {m}"));
    }
    let dw = kernels::conv_w(x.value().data(), gy.value().data(), g, n);
    let dw = Tensor::new(g.weight_shape(), dw)?;
    Ok(Var::from_op(dw, ConvWeightGradOp(g.clone()), vec![x.clone(), gy.clone()]))
}

fn add_channel_bias<T: Scalar>(y: Var<T>, bias: Option<&Var<T>>) -> Result<Var<T>> {
    let Some(b) = bias else { return Ok(y) };
    let c = y.shape()[1];
    if b.shape() != [c] {
        return config(format!("bias shape {:?}, expected [{c}]", b.shape()));
    }
    super::channel_affine(&y, None, Some(b))
}

fn as_batched<T: Scalar>(x: &Var<T>) -> Result<(Var<T>, bool)> {
    match x.ndim() {
        5 => Ok((x.clone(), false)),
        4 => {
            let mut s = vec![1];
            s.extend_from_slice(x.shape());
            Ok((reshape(x, &s)?, true))
        }
        _ => config(format!("conv input must be [C,X,Y,Z] or [N,C,X,Y,Z], got {:?}", x.shape())),
    }
}

fn unbatch<T: Scalar>(y: Var<T>, squeeze: bool) -> Result<Var<T>> {
    if squeeze {
        let s = y.shape()[1..].to_vec();
        reshape(&y, &s)
    } else {
        Ok(y)
    }
}

fn spatial(shape: &[usize]) -> [usize; 3] {
    [shape[2], shape[3], shape[4]]
}

/// 3D cross-correlation layer. `x` is `[C_in,X,Y,Z]` or `[N,C_in,X,Y,Z]`,
/// `w` is `[C_out, C_in, kx, ky, kz]`.
pub fn conv3d<T: Scalar>(
    x: &Var<T>,
    w: &Var<T>,
    bias: Option<&Var<T>>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<Var<T>> {
    let (xb, squeeze) = as_batched(x)?;
    if w.ndim() != 5 {
        return config(format!("conv weight must be 5D, got {:?}", w.shape()));
    }
    let ws = w.shape();
    if ws[1] != xb.shape()[1] {
        return config(format!("input has {} channels, weight expects {}", xb.shape()[1], ws[1]));
    }
    let g = ConvGeom::forward(ws[1], ws[0], spatial(xb.shape()), [ws[2], ws[3], ws[4]], stride, pad)?;
    let y = add_channel_bias(conv_forward(&xb, w, &g)?, bias)?;
    unbatch(y, squeeze)
}

/// Transposed 3D convolution layer. `w` is `[C_in, C_out, kx, ky, kz]`;
/// output extent per axis is `(in - 1) stride - 2 pad + k`.
pub fn conv3d_transposed<T: Scalar>(
    x: &Var<T>,
    w: &Var<T>,
    bias: Option<&Var<T>>,
    stride: [usize; 3],
    pad: [usize; 3],
) -> Result<Var<T>> {
    let (xb, squeeze) = as_batched(x)?;
    if w.ndim() != 5 {
        return config(format!("conv weight must be 5D, got {:?}", w.shape()));
    }
    let ws = w.shape();
    if ws[0] != xb.shape()[1] {
        return config(format!("input has {} channels, weight expects {}", xb.shape()[1], ws[0]));
    }
    let g = ConvGeom::transposed(ws[0], ws[1], spatial(xb.shape()), [ws[2], ws[3], ws[4]], stride, pad)?;
    let y = add_channel_bias(conv_input_grad(&xb, w, &g)?, bias)?;
    unbatch(y, squeeze)
}
