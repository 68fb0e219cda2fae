use gradcore::init::{init_normal, init_orthogonal, NORMAL_STD};
use gradcore::spectral::{power_iteration, random_unit};
use gradcore::{MatrixView, Parameter, RunningStats, Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ArchitectureConfig, LatentSpec};
use crate::error::{config, Result};
use crate::network::{Activation, Layer, Network, Role};
use crate::schedule::{channel_widths, stride_schedule, Step};

/// Power-iteration rounds run on each freshly initialized weight so the
/// stored singular vector starts converged.
pub const SPECTRAL_WARMUP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resample {
    Up(Step),
    Down(Step),
    None,
}

/// Allocates parameters and emits layers.
pub struct NetworkBuilder<T: Scalar> {
    params: Vec<Parameter<T>>,
    spectral: Vec<Option<MatrixView>>,
    stats: Vec<RunningStats<T>>,
    rng: ChaCha8Rng,
    pub spectral_norm: bool,
    pub orthogonal: bool,
    pub kernel_base: usize,
    /// Latent width for conditional batch norm, when enabled.
    pub cond_dim: Option<usize>,
}

impl<T: Scalar> NetworkBuilder<T> {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            params: Vec::new(),
            spectral: Vec::new(),
            stats: Vec::new(),
            rng,
            spectral_norm: false,
            orthogonal: false,
            kernel_base: 4,
            cond_dim: None,
        }
    }

    fn push(&mut self, p: Parameter<T>, view: Option<MatrixView>) -> usize {
        self.params.push(p);
        self.spectral.push(view);
        self.params.len() - 1
    }

    fn weight(&mut self, name: String, shape: [usize; 5], view: MatrixView) -> usize {
        let mut w = Tensor::zeros(shape.to_vec());
        if self.orthogonal {
            init_orthogonal(&mut w, view, &mut self.rng);
        } else {
            init_normal(&mut w, NORMAL_STD, &mut self.rng);
        }
        let mut p = Parameter::new(name, w);
        if self.spectral_norm {
            let (rows, cols) = view.dims(&shape);
            let mut u = random_unit(rows, &mut self.rng);
            power_iteration(&view.to_matrix(&p.value), rows, cols, &mut u, SPECTRAL_WARMUP);
            p.spectral_u = Some(u);
            self.push(p, Some(view))
        } else {
            self.push(p, None)
        }
    }

    fn bias(&mut self, name: String, c: usize) -> usize {
        self.push(Parameter::new(name, Tensor::zeros(vec![c])), None)
    }

    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: [usize; 3], stride: [usize; 3], pad: [usize; 3], bias: bool) -> Layer {
        let weight = self.weight(format!("{name}.w"), [cout, cin, k[0], k[1], k[2]], MatrixView { row_axis: 0 });
        let bias = bias.then(|| self.bias(format!("{name}.b"), cout));
        Layer::Conv { weight, bias, stride, pad }
    }

    pub fn conv_t(&mut self, name: &str, cin: usize, cout: usize, k: [usize; 3], stride: [usize; 3], pad: [usize; 3], bias: bool) -> Layer {
        let weight = self.weight(format!("{name}.w"), [cin, cout, k[0], k[1], k[2]], MatrixView { row_axis: 1 });
        let bias = bias.then(|| self.bias(format!("{name}.b"), cout));
        Layer::ConvT { weight, bias, stride, pad }
    }

    pub fn norm(&mut self, name: &str, c: usize, conditional: bool) -> Layer {
        self.stats.push(RunningStats::new(c));
        let stats = self.stats.len() - 1;
        match (conditional, self.cond_dim) {
            (true, Some(d)) => {
                let w_gamma = self.push(Parameter::new(format!("{name}.w_gamma"), Tensor::zeros(vec![c, d])), None);
                let w_beta = self.push(Parameter::new(format!("{name}.w_beta"), Tensor::zeros(vec![c, d])), None);
                Layer::CondBatchNorm { w_gamma, w_beta, stats }
            }
            _ => {
                let gamma = self.push(Parameter::new(format!("{name}.gamma"), Tensor::ones(vec![c])), None);
                let beta = self.push(Parameter::new(format!("{name}.beta"), Tensor::zeros(vec![c])), None);
                Layer::BatchNorm { gamma, beta, stats }
            }
        }
    }

    fn resample_conv(&mut self, name: &str, cin: usize, cout: usize, resample: Resample, bias: bool) -> Layer {
        match resample {
            Resample::Up(s) => self.conv_t(name, cin, cout, s.kernel, s.stride, s.pad(self.kernel_base), bias),
            Resample::Down(s) => self.conv(name, cin, cout, s.kernel, s.stride, s.pad(self.kernel_base), bias),
            Resample::None => self.conv(name, cin, cout, [3; 3], [1; 3], [1; 3], bias),
        }
    }

    /// Pre-activation residual block. The bottleneck variant narrows to
    /// `max(cin, cout) / 4` channels around a single resampling convolution.
    /// Downsampling shortcuts are strided convolutions with kernel equal to
    /// the stride.
    #[allow(clippy::too_many_arguments)]
    pub fn residual_block(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        resample: Resample,
        act: Activation,
        batch_norm: bool,
        bottleneck: bool,
    ) -> Layer {
        let cond = self.cond_dim.is_some();
        let mut stack = Vec::new();
        let norm = |b: &mut Self, stack: &mut Vec<Layer>, tag: &str, c: usize| {
            if batch_norm {
                stack.push(b.norm(&format!("{name}.{tag}"), c, cond));
            }
            stack.push(Layer::Act(act));
        };
        if bottleneck {
            let mid = (cin.max(cout) / 4).max(1);
            norm(self, &mut stack, "bn0", cin);
            stack.push(self.conv(&format!("{name}.reduce"), cin, mid, [1; 3], [1; 3], [0; 3], !batch_norm));
            norm(self, &mut stack, "bn1", mid);
            stack.push(self.resample_conv(&format!("{name}.conv"), mid, mid, resample, !batch_norm));
            norm(self, &mut stack, "bn2", mid);
            stack.push(self.conv(&format!("{name}.expand"), mid, cout, [1; 3], [1; 3], [0; 3], true));
        } else {
            norm(self, &mut stack, "bn0", cin);
            stack.push(self.resample_conv(&format!("{name}.conv0"), cin, cout, resample, !batch_norm));
            norm(self, &mut stack, "bn1", cout);
            stack.push(self.conv(&format!("{name}.conv1"), cout, cout, [3; 3], [1; 3], [1; 3], true));
        }
        let mut shortcut = Vec::new();
        match resample {
            Resample::Down(s) => {
                shortcut.push(self.conv(&format!("{name}.shortcut"), cin, cout, s.stride, s.stride, [0; 3], true));
            }
            Resample::Up(s) => {
                if cin != cout {
                    shortcut.push(self.conv(&format!("{name}.shortcut"), cin, cout, [1; 3], [1; 3], [0; 3], true));
                }
                shortcut.push(Layer::Upsample(s.stride));
            }
            Resample::None if cin != cout => {
                shortcut.push(self.conv(&format!("{name}.shortcut"), cin, cout, [1; 3], [1; 3], [0; 3], true));
            }
            Resample::None => {}
        }
        Layer::Residual { stack, shortcut }
    }

    pub fn finish(self, role: Role, body: Vec<Layer>, input_shape: [usize; 4]) -> Network<T> {
        let latent_skip = self.cond_dim.is_some();
        Network { role, params: self.params, spectral: self.spectral, stats: self.stats, body, input_shape, latent_skip }
    }
}

const G_STREAM: u64 = 1;
const D_STREAM: u64 = 2;

fn plan(arch: &ArchitectureConfig, latent: &LatentSpec) -> Result<(Vec<Step>, Vec<usize>)> {
    arch.validate()?;
    latent.validate(arch.target_shape)?;
    let steps = stride_schedule(latent.spatial, arch.target_shape, arch.growth_policy, arch.kernel_base)?;
    if steps.is_empty() {
        return config("latent extent equals the target shape; nothing to grow");
    }
    let widths = channel_widths(steps.len(), arch.base_channels);
    Ok((steps, widths))
}

fn builder<T: Scalar>(arch: &ArchitectureConfig, seed: u64, stream: u64) -> NetworkBuilder<T> {
    let mut b = NetworkBuilder::new(seed, stream);
    b.spectral_norm = arch.spectral_norm;
    b.orthogonal = arch.orthogonal_init;
    b.kernel_base = arch.kernel_base;
    b
}

/// Generator mapping `[N, dim, latent spatial]` to `[N, channels_out, target]`.
pub fn build_generator<T: Scalar>(arch: &ArchitectureConfig, latent: &LatentSpec, seed: u64) -> Result<Network<T>> {
    let (steps, w) = plan(arch, latent)?;
    let l = steps.len();
    let mut b = builder::<T>(arch, seed, G_STREAM);
    if arch.latent_skip {
        b.cond_dim = Some(latent.dim);
    }
    let act = if arch.leaky_g { Activation::Leaky(arch.leaky_slope) } else { Activation::Relu };
    let kb = arch.kernel_base;
    let mut body = Vec::new();
    if arch.residual_blocks {
        body.push(b.conv("g.stem", latent.dim, w[0], [1; 3], [1; 3], [0; 3], true));
        for (i, step) in steps.iter().enumerate() {
            body.push(b.residual_block(&format!("g.up{i}"), w[i], w[i + 1], Resample::Up(*step), act, true, arch.bottleneck_blocks));
            if arch.double_blocks {
                body.push(b.residual_block(&format!("g.same{i}"), w[i + 1], w[i + 1], Resample::None, act, true, arch.bottleneck_blocks));
            }
        }
        body.push(b.norm("g.head.bn", w[l], false));
        body.push(Layer::Act(act));
        body.push(b.conv("g.head", w[l], arch.channels_out, [3; 3], [1; 3], [1; 3], true));
    } else {
        let cond = arch.latent_skip;
        for (i, step) in steps.iter().enumerate() {
            let last = i + 1 == l;
            let cin = if i == 0 { latent.dim } else { w[i] };
            let cout = if last { arch.channels_out } else { w[i + 1] };
            body.push(b.conv_t(&format!("g.up{i}"), cin, cout, step.kernel, step.stride, step.pad(kb), last));
            if !last {
                body.push(b.norm(&format!("g.up{i}.bn"), cout, cond));
                body.push(Layer::Act(act));
                if arch.double_blocks {
                    body.push(b.conv(&format!("g.same{i}"), cout, cout, [3; 3], [1; 3], [1; 3], false));
                    body.push(b.norm(&format!("g.same{i}.bn"), cout, cond));
                    body.push(Layer::Act(act));
                }
            }
        }
    }
    body.push(Layer::Act(Activation::Tanh));
    Ok(b.finish(Role::Generator, body, [latent.dim, latent.spatial[0], latent.spatial[1], latent.spatial[2]]))
}

/// Discriminator mapping `[N, channels_out, target]` to `[N, 1]` logits
/// (probabilities when `logits_loss` is off).
pub fn build_discriminator<T: Scalar>(arch: &ArchitectureConfig, latent: &LatentSpec, seed: u64) -> Result<Network<T>> {
    let (steps, w) = plan(arch, latent)?;
    let l = steps.len();
    let mut b = builder::<T>(arch, seed, D_STREAM);
    let act = Activation::Leaky(0.2);
    let bn = !arch.no_batch_in_d;
    let kb = arch.kernel_base;
    let mut body = Vec::new();
    if arch.residual_blocks {
        body.push(b.conv("d.stem", arch.channels_out, w[l], [3; 3], [1; 3], [1; 3], true));
        for i in (0..l).rev() {
            if arch.double_blocks {
                body.push(b.residual_block(&format!("d.same{i}"), w[i + 1], w[i + 1], Resample::None, act, bn, arch.bottleneck_blocks));
            }
            body.push(b.residual_block(&format!("d.down{i}"), w[i + 1], w[i], Resample::Down(steps[i]), act, bn, arch.bottleneck_blocks));
        }
        body.push(Layer::Act(act));
    } else {
        for i in (0..l).rev() {
            let first = i + 1 == l;
            let cin = if first { arch.channels_out } else { w[i + 1] };
            if arch.double_blocks && !first {
                body.push(b.conv(&format!("d.same{i}"), cin, cin, [3; 3], [1; 3], [1; 3], !bn));
                if bn {
                    body.push(b.norm(&format!("d.same{i}.bn"), cin, false));
                }
                body.push(Layer::Act(act));
            }
            let step = steps[i];
            body.push(b.conv(&format!("d.down{i}"), cin, w[i], step.kernel, step.stride, step.pad(kb), first || !bn));
            if bn && !first {
                body.push(b.norm(&format!("d.down{i}.bn"), w[i], false));
            }
            body.push(Layer::Act(act));
        }
    }
    body.push(b.conv("d.head", w[0], 1, latent.spatial, [1; 3], [0; 3], true));
    body.push(Layer::Flatten);
    if !arch.logits_loss {
        body.push(Layer::Act(Activation::Sigmoid));
    }
    let t = arch.target_shape;
    Ok(b.finish(Role::Discriminator, body, [arch.channels_out, t[0], t[1], t[2]]))
}
