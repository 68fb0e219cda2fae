use std::fmt::Write as _;

use gradcore::ops::{self, avg_pool, conv3d, conv3d_transposed, upsample_nearest};
use gradcore::norm::{batch_norm, conditional_batch_norm};
use gradcore::spectral::{power_iteration, spectral_normalize};
use gradcore::{MatrixView, NormMode, Parameter, RunningStats, Scalar, Var};

use crate::error::{config, Result};

/// Power-iteration rounds per bound forward pass.
pub const SPECTRAL_ITERS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    Leaky(f64),
    Tanh,
    Sigmoid,
}

/// One node of a network body. Indices refer to [`Network::params`] and
/// [`Network::stats`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv { weight: usize, bias: Option<usize>, stride: [usize; 3], pad: [usize; 3] },
    ConvT { weight: usize, bias: Option<usize>, stride: [usize; 3], pad: [usize; 3] },
    BatchNorm { gamma: usize, beta: usize, stats: usize },
    /// Batch norm with affine parameters projected from the latent skip vector.
    CondBatchNorm { w_gamma: usize, w_beta: usize, stats: usize },
    Act(Activation),
    Upsample([usize; 3]),
    AvgPool([usize; 3]),
    Residual { stack: Vec<Layer>, shortcut: Vec<Layer> },
    /// `[N, 1, 1, 1, 1] -> [N, 1]`.
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generator,
    Discriminator,
}

/// Parameters, running statistics and layer graph of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar> {
    pub role: Role,
    pub params: Vec<Parameter<T>>,
    /// Matrix view of each spectrally normalized parameter.
    pub spectral: Vec<Option<MatrixView>>,
    pub stats: Vec<RunningStats<T>>,
    pub body: Vec<Layer>,
    /// Per-item input shape `[C, X, Y, Z]`. Generators accept any spatial
    /// extent; discriminators need exactly this one.
    pub input_shape: [usize; 4],
    /// Conditional batch norm layers read the spatial mean of the input.
    pub latent_skip: bool,
}

/// Parameters bound as graph nodes for one training or inference step.
pub struct Bound<T: Scalar> {
    /// Raw parameter nodes; gradients are taken with respect to these.
    pub raw: Vec<Var<T>>,
    /// Values used by the layers (spectrally normalized where enabled).
    pub effective: Vec<Var<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    /// Wraps every parameter as a graph node. With `trainable` the nodes are
    /// leaves; with `update_u` the stored singular-vector estimates advance.
    pub fn bind(&mut self, trainable: bool, update_u: bool) -> Result<Bound<T>> {
        let mut raw = Vec::with_capacity(self.params.len());
        let mut effective = Vec::with_capacity(self.params.len());
        for (p, view) in self.params.iter_mut().zip(&self.spectral) {
            let v = if trainable { Var::leaf(p.value.clone()) } else { Var::constant(p.value.clone()) };
            let eff = match view {
                Some(view) => {
                    let u = p.spectral_u.as_mut().expect("spectral parameters carry u");
                    if update_u {
                        spectral_normalize(&v, *view, u, SPECTRAL_ITERS)?.0
                    } else {
                        let mut scratch = u.clone();
                        spectral_normalize(&v, *view, &mut scratch, SPECTRAL_ITERS)?.0
                    }
                }
                None => v.clone(),
            };
            raw.push(v);
            effective.push(eff);
        }
        Ok(Bound { raw, effective })
    }

    /// Runs the body on `x[N, C, X, Y, Z]`.
    pub fn forward(&mut self, bound: &Bound<T>, x: &Var<T>, mode: NormMode) -> Result<Var<T>> {
        let s = x.shape();
        let ok = s.len() == 5
            && s[1] == self.input_shape[0]
            && (self.role == Role::Generator || s[2..] == self.input_shape[1..]);
        if !ok {
            return config(format!("{:?} expects [N, {:?}], got {s:?}", self.role, self.input_shape));
        }
        let cond = if self.latent_skip { Some(spatial_mean(x)?) } else { None };
        let body = std::mem::take(&mut self.body);
        let out = run(&body, &mut self.stats, bound, x.clone(), mode, cond.as_ref());
        self.body = body;
        out
    }

    /// Largest singular value of each spectrally normalized effective weight,
    /// estimated with `iters` further power-iteration rounds from the stored `u`.
    pub fn normalized_sigmas(&self, iters: usize) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (p, view) in self.params.iter().zip(&self.spectral) {
            if let (Some(view), Some(u)) = (view, &p.spectral_u) {
                let (rows, cols) = view.dims(p.value.shape());
                let m = view.to_matrix(&p.value);
                let mut u1 = u.clone();
                let sigma = power_iteration(&m, rows, cols, &mut u1, 1).f64().max(1e-12);
                let scaled: Vec<T> = m.iter().map(|&v| T::of(v.f64() / sigma)).collect();
                let s = power_iteration(&scaled, rows, cols, &mut u1, iters).f64();
                out.push((p.name.clone(), s));
            }
        }
        out
    }

    /// Layer-by-layer listing with output shapes for an input of batch size 1.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:?}: {} parameters", self.role, self.parameter_count());
        let mut shape = vec![1, self.input_shape[0], self.input_shape[1], self.input_shape[2], self.input_shape[3]];
        let _ = writeln!(s, "input {:?}", &shape[1..]);
        describe_layers(&self.body, &self.params, &mut shape, 0, &mut s);
        s
    }
}

fn weight<T: Scalar>(b: &Bound<T>, i: usize) -> &Var<T> {
    &b.effective[i]
}

fn run<T: Scalar>(
    layers: &[Layer],
    stats: &mut [RunningStats<T>],
    b: &Bound<T>,
    mut x: Var<T>,
    mode: NormMode,
    cond: Option<&Var<T>>,
) -> Result<Var<T>> {
    for layer in layers {
        x = match layer {
            Layer::Conv { weight: w, bias, stride, pad } => {
                conv3d(&x, weight(b, *w), bias.map(|i| weight(b, i)), *stride, *pad)?
            }
            Layer::ConvT { weight: w, bias, stride, pad } => {
                conv3d_transposed(&x, weight(b, *w), bias.map(|i| weight(b, i)), *stride, *pad)?
            }
            Layer::BatchNorm { gamma, beta, stats: s } => {
                batch_norm(&x, weight(b, *gamma), weight(b, *beta), &mut stats[*s], mode)?
            }
            Layer::CondBatchNorm { w_gamma, w_beta, stats: s } => {
                let Some(z) = cond else {
                    return config("conditional batch norm needs a latent skip vector");
                };
                conditional_batch_norm(&x, z, weight(b, *w_gamma), weight(b, *w_beta), &mut stats[*s], mode)?
            }
            Layer::Act(a) => match a {
                Activation::Relu => ops::relu(&x),
                Activation::Leaky(slope) => ops::leaky_relu(&x, T::of(*slope)),
                Activation::Tanh => ops::tanh(&x),
                Activation::Sigmoid => ops::sigmoid(&x),
            },
            Layer::Upsample(f) => upsample_nearest(&x, *f)?,
            Layer::AvgPool(f) => avg_pool(&x, *f)?,
            Layer::Residual { stack, shortcut } => {
                let main = run(stack, stats, b, x.clone(), mode, cond)?;
                let skip = run(shortcut, stats, b, x, mode, cond)?;
                ops::add(&main, &skip)?
            }
            Layer::Flatten => {
                let n = x.shape()[0];
                let rest: usize = x.shape()[1..].iter().product();
                ops::reshape(&x, &[n, rest])?
            }
        };
    }
    Ok(x)
}

fn conv_out(n: usize, k: usize, s: usize, p: usize) -> usize {
    (n + 2 * p).saturating_sub(k) / s + 1
}

fn describe_layers<T: Scalar>(layers: &[Layer], params: &[Parameter<T>], shape: &mut Vec<usize>, depth: usize, s: &mut String) {
    let indent = "  ".repeat(depth + 1);
    for layer in layers {
        let label = match layer {
            Layer::Conv { weight, stride, pad, .. } => {
                let ws = params[*weight].value.shape();
                shape[1] = ws[0];
                for d in 0..3 {
                    shape[2 + d] = conv_out(shape[2 + d], ws[2 + d], stride[d], pad[d]);
                }
                format!("conv {:?} k{:?} s{stride:?} p{pad:?}", params[*weight].name, &ws[2..])
            }
            Layer::ConvT { weight, stride, pad, .. } => {
                let ws = params[*weight].value.shape();
                shape[1] = ws[1];
                for d in 0..3 {
                    shape[2 + d] = (shape[2 + d] - 1) * stride[d] + ws[2 + d] - 2 * pad[d];
                }
                format!("conv_t {:?} k{:?} s{stride:?} p{pad:?}", params[*weight].name, &ws[2..])
            }
            Layer::BatchNorm { .. } => "batch_norm".to_string(),
            Layer::CondBatchNorm { .. } => "cond_batch_norm".to_string(),
            Layer::Act(a) => format!("{a:?}").to_lowercase(),
            Layer::Upsample(f) => {
                for d in 0..3 {
                    shape[2 + d] *= f[d];
                }
                format!("upsample {f:?}")
            }
            Layer::AvgPool(f) => {
                for d in 0..3 {
                    shape[2 + d] /= f[d];
                }
                format!("avg_pool {f:?}")
            }
            Layer::Residual { stack, shortcut } => {
                let _ = writeln!(s, "{indent}residual");
                let mut main = shape.clone();
                let _ = writeln!(s, "{indent}  stack:");
                describe_layers(stack, params, &mut main, depth + 2, s);
                let _ = writeln!(s, "{indent}  shortcut:");
                describe_layers(shortcut, params, shape, depth + 2, s);
                *shape = main;
                continue;
            }
            Layer::Flatten => {
                let rest: usize = shape[1..].iter().product();
                *shape = vec![shape[0], rest];
                "flatten".to_string()
            }
        };
        let _ = writeln!(s, "{indent}{label:<48} -> {:?}", &shape[1..]);
    }
}

/// `[N, C, X, Y, Z] -> [N, C]` mean over the spatial axes.
pub fn spatial_mean<T: Scalar>(x: &Var<T>) -> Result<Var<T>> {
    let s = x.shape();
    let (n, c, vol) = (s[0], s[1], s[2..].iter().product::<usize>());
    let flat = ops::reshape(x, &[n, c, vol])?;
    let summed = ops::sum_to(&flat, &[n, c, 1])?;
    Ok(ops::reshape(&ops::scale(&summed, T::one() / T::of(vol as f64)), &[n, c])?)
}
