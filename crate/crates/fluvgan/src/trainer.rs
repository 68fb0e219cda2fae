use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use geovalid::{sample_superposition, SetDescriptor, SwdSettings};
use gradcore::loss::{bce, bce_with_logits};
use gradcore::ops::{self, mean_all, square, sum_all, sum_to};
use gradcore::{grad, no_grad, Adam, NormMode, Scalar, Tensor, Var};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::build::{build_discriminator, build_generator};
use crate::config::{ArchitectureConfig, LatentSpec};
use crate::error::{config, GanError, Result};
use crate::network::{Bound, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Binary cross entropy with the non-saturating generator objective.
    NonSaturating,
    /// Wasserstein critic with a gradient penalty.
    WganGp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_g_iterations: u64,
    pub loss_mode: LossMode,
    pub gp_weight: f64,
    pub r1_weight: f64,
    /// R1 is applied on every `r1_interval`-th discriminator step, scaled by the interval.
    pub r1_interval: u64,
    pub validation_interval: u64,
    pub checkpoint_interval: u64,
    /// Generated samples per validation point.
    pub validation_samples: usize,
    pub swd: SwdSettings,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            total_g_iterations: 1000,
            loss_mode: LossMode::NonSaturating,
            gp_weight: 10.0,
            r1_weight: 10.0,
            r1_interval: 16,
            validation_interval: 100,
            checkpoint_interval: 500,
            validation_samples: 64,
            swd: SwdSettings::default(),
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return config("batch_size must be at least 2 for batch statistics");
        }
        if self.r1_interval == 0 || self.validation_interval == 0 || self.checkpoint_interval == 0 {
            return config("intervals must be positive");
        }
        if self.validation_samples == 0 {
            return config("validation_samples must be positive");
        }
        Ok(())
    }
}

/// Everything needed to rebuild a run from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub architecture: ArchitectureConfig,
    pub latent: LatentSpec,
    pub train: TrainConfig,
}

/// Generator, discriminator and counters of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct GanState<T: Scalar> {
    pub run: RunConfig,
    pub g: Network<T>,
    pub d: Network<T>,
    /// Completed generator iterations.
    pub iteration: u64,
    /// Completed discriminator steps.
    pub d_steps: u64,
}

impl<T: Scalar> GanState<T> {
    pub fn new(run: RunConfig) -> Result<Self> {
        run.train.validate()?;
        let g = build_generator(&run.architecture, &run.latent, run.seed)?;
        let d = build_discriminator(&run.architecture, &run.latent, run.seed)?;
        Ok(Self { run, g, d, iteration: 0, d_steps: 0 })
    }

    fn adam_g(&self) -> Adam {
        let (b1, b2) = self.run.architecture.betas();
        Adam::new(self.run.architecture.lr_g, b1, b2)
    }

    fn adam_d(&self) -> Adam {
        let (b1, b2) = self.run.architecture.betas();
        Adam::new(self.run.architecture.lr_d, b1, b2)
    }

    /// Latent batch `[n, dim, spatial]` of standard normals.
    pub fn latents<R: Rng + ?Sized>(&self, n: usize, spatial: [usize; 3], rng: &mut R) -> Tensor<T> {
        let l = &self.run.latent;
        Tensor::randn(vec![n, l.dim, spatial[0], spatial[1], spatial[2]], rng)
    }
}

const STREAM_G_LATENT: u64 = 1;
const STREAM_D_LATENT: u64 = 16;
const STREAM_D_DATA: u64 = 32;
const STREAM_VALIDATION: u64 = 64;

/// Generator keyed by `(seed, iteration, stream)`, so any iteration can be
/// replayed without the history before it.
pub fn step_rng(seed: u64, iteration: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&iteration.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

fn full<T: Scalar>(shape: &[usize], v: f64) -> Tensor<T> {
    Tensor::full(shape.to_vec(), T::of(v))
}

/// Adversarial loss of discriminator outputs against a constant label.
fn label_loss<T: Scalar>(out: &Var<T>, label: f64, logits: bool) -> Result<Var<T>> {
    let t = full(out.shape(), label);
    Ok(if logits { bce_with_logits(out, &t)? } else { bce(out, &t)? })
}

/// `(weight / 2) * mean_i ||d out_i / d x_i||^2`, differentiable with respect
/// to the discriminator parameters.
pub fn r1_penalty<T: Scalar>(out: &Var<T>, x: &Var<T>, weight: f64) -> Result<Var<T>> {
    let n = x.shape()[0];
    let g = grad(&sum_all(out), &[x], true)?.remove(0);
    let g = g.unwrap_or_else(|| Var::constant(Tensor::zeros(x.shape().to_vec())));
    Ok(ops::scale(&sum_all(&square(&g)), T::of(weight / 2.0 / n as f64)))
}

/// WGAN-GP term `mean_i (||grad D(x_hat_i)|| - 1)^2` on per-item random
/// interpolates of `real` and `fake`.
pub fn gradient_penalty<T: Scalar, R: Rng + ?Sized>(
    d: &mut Network<T>,
    bound: &Bound<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    rng: &mut R,
) -> Result<Var<T>> {
    let n = real.shape()[0];
    let per = real.len() / n;
    let eps: Vec<T> = (0..n).map(|_| T::of(rng.random::<f64>())).collect();
    let mixed = Tensor::from_fn(real.shape().to_vec(), |i| {
        let e = eps[i / per];
        e * real.data()[i] + (T::one() - e) * fake.data()[i]
    });
    let x = Var::leaf(mixed);
    let out = d.forward(bound, &x, NormMode::Train { update_stats: false })?;
    let g = grad(&sum_all(&out), &[&x], true)?.remove(0);
    let g = g.unwrap_or_else(|| Var::constant(Tensor::zeros(x.shape().to_vec())));
    let sq = sum_to(&ops::reshape(&square(&g), &[n, per])?, &[n, 1])?;
    let norm = ops::powf(&ops::add_scalar(&sq, T::of(1e-12)), T::of(0.5));
    Ok(mean_all(&square(&ops::add_scalar(&norm, -T::one()))))
}

fn apply_grads<T: Scalar>(net: &mut Network<T>, bound: &Bound<T>, loss: &Var<T>, adam: &Adam) -> Result<()> {
    let wrt: Vec<&Var<T>> = bound.raw.iter().collect();
    let grads = grad(loss, &wrt, false)?;
    for (p, g) in net.params.iter_mut().zip(grads) {
        p.zero_grad();
        if let Some(g) = g {
            p.accumulate_grad(g.value())?;
        }
    }
    adam.step(&mut net.params)?;
    for p in net.params.iter_mut() {
        p.grad = None;
    }
    Ok(())
}

fn check_finite(v: f64, iteration: u64, g_loss: f64, d_loss: f64, nets: [&Network<impl Scalar>; 2]) -> Result<()> {
    if v.is_finite() {
        return Ok(());
    }
    Err(GanError::NonFinite { iteration, g_loss, d_loss, params: parameter_summary(nets) })
}

fn parameter_summary<T: Scalar>(nets: [&Network<T>; 2]) -> String {
    let mut worst = (String::new(), 0.0f64);
    let mut bad = Vec::new();
    for net in nets {
        for p in &net.params {
            if !p.value.all_finite() {
                bad.push(p.name.clone());
            }
            let m = p.value.max_abs().f64();
            if m > worst.1 || m.is_nan() {
                worst = (p.name.clone(), m);
            }
        }
    }
    format!("largest |param| {} = {:e}; non-finite params: {:?}", worst.0, worst.1, bad)
}

/// One discriminator update on `real[N, C, X, Y, Z]`; returns the loss.
pub fn d_step<T: Scalar, R: Rng + ?Sized>(state: &mut GanState<T>, real: Tensor<T>, rng: &mut R) -> Result<f64> {
    let n = real.shape()[0];
    let arch = state.run.architecture.clone();
    let train = state.run.train.clone();
    let z = state.latents(n, state.run.latent.spatial, rng);
    let fake = {
        let _guard = no_grad();
        let gb = state.g.bind(false, false)?;
        state.g.forward(&gb, &Var::constant(z), NormMode::Train { update_stats: false })?.value().clone()
    };
    let apply_r1 = arch.r1 && state.d_steps % train.r1_interval == 0;
    let real_v = if apply_r1 { Var::leaf(real.clone()) } else { Var::constant(real.clone()) };
    let db = state.d.bind(true, true)?;
    let out_real = state.d.forward(&db, &real_v, NormMode::Train { update_stats: true })?;
    let out_fake = state.d.forward(&db, &Var::constant(fake.clone()), NormMode::Train { update_stats: false })?;
    let mut loss = match train.loss_mode {
        LossMode::NonSaturating => ops::add(
            &label_loss(&out_real, 1.0, arch.logits_loss)?,
            &label_loss(&out_fake, 0.0, arch.logits_loss)?,
        )?,
        LossMode::WganGp => {
            let w = ops::sub(&mean_all(&out_fake), &mean_all(&out_real))?;
            let gp = gradient_penalty(&mut state.d, &db, &real, &fake, rng)?;
            ops::add(&w, &ops::scale(&gp, T::of(train.gp_weight)))?
        }
    };
    if apply_r1 {
        let r1 = r1_penalty(&out_real, &real_v, train.r1_weight)?;
        loss = ops::add(&loss, &ops::scale(&r1, T::of(train.r1_interval as f64)))?;
    }
    let value = loss.item().f64();
    check_finite(value, state.iteration, f64::NAN, value, [&state.g, &state.d])?;
    let adam = state.adam_d();
    apply_grads(&mut state.d, &db, &loss, &adam)?;
    state.d_steps += 1;
    Ok(value)
}

/// One generator update; returns the loss.
pub fn g_step<T: Scalar, R: Rng + ?Sized>(state: &mut GanState<T>, n: usize, rng: &mut R) -> Result<f64> {
    let arch = state.run.architecture.clone();
    let z = state.latents(n, state.run.latent.spatial, rng);
    let gb = state.g.bind(true, true)?;
    let fake = state.g.forward(&gb, &Var::constant(z), NormMode::Train { update_stats: true })?;
    let db = state.d.bind(false, false)?;
    let out = state.d.forward(&db, &fake, NormMode::Train { update_stats: false })?;
    let loss = match state.run.train.loss_mode {
        LossMode::NonSaturating => label_loss(&out, 1.0, arch.logits_loss)?,
        LossMode::WganGp => ops::neg(&mean_all(&out)),
    };
    let value = loss.item().f64();
    check_finite(value, state.iteration, value, f64::NAN, [&state.g, &state.d])?;
    let adam = state.adam_g();
    apply_grads(&mut state.g, &gb, &loss, &adam)?;
    Ok(value)
}

/// Random training batch `[n, C, X, Y, Z]`; sampled without replacement when
/// the pool is large enough.
pub fn sample_batch<T: Scalar, R: Rng + ?Sized>(data: &[Tensor<T>], n: usize, rng: &mut R) -> Result<Tensor<T>> {
    if data.is_empty() {
        return config("empty training set");
    }
    let idx: Vec<usize> = if data.len() >= n {
        sample_indices(rng, data.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..data.len())).collect()
    };
    let items: Vec<Tensor<T>> = idx.into_iter().map(|i| data[i].clone()).collect();
    Ok(Tensor::stack(&items)?)
}

/// Runs `d_steps_per_g` discriminator updates and one generator update.
/// Returns `(g_loss, mean d_loss)`.
pub fn train_iteration<T: Scalar>(state: &mut GanState<T>, data: &[Tensor<T>]) -> Result<(f64, f64)> {
    let seed = state.run.seed;
    let it = state.iteration;
    let n = state.run.train.batch_size;
    let k = state.run.architecture.d_steps_per_g as u64;
    let mut d_total = 0.0;
    for s in 0..k {
        let batch = sample_batch(data, n, &mut step_rng(seed, it, STREAM_D_DATA + s))?;
        d_total += d_step(state, batch, &mut step_rng(seed, it, STREAM_D_LATENT + s))?;
    }
    let g_loss = g_step(state, n, &mut step_rng(seed, it, STREAM_G_LATENT))?;
    state.iteration += 1;
    Ok((g_loss, d_total / k as f64))
}

/// Generator output in evaluation mode for the given latents.
pub fn generate<T: Scalar>(g: &mut Network<T>, latents: &Tensor<T>, chunk: usize) -> Result<Vec<Tensor<f64>>> {
    let _guard = no_grad();
    let bound = g.bind(false, false)?;
    let n = latents.shape()[0];
    let mut out = Vec::with_capacity(n);
    let items: Vec<Tensor<T>> = (0..n).map(|i| latents.select(i)).collect();
    for part in items.chunks(chunk.max(1)) {
        let z = Tensor::stack(part)?;
        let y = g.forward(&bound, &Var::constant(z), NormMode::Eval)?;
        for i in 0..part.len() {
            out.push(y.value().select(i).cast());
        }
    }
    Ok(out)
}

/// Fixed validation latents, reference descriptor and settings.
pub struct Validator<T: Scalar> {
    pub latents: Tensor<T>,
    pub reference: SetDescriptor,
    pub settings: SwdSettings,
}

impl<T: Scalar> Validator<T> {
    pub fn new(state: &GanState<T>, reference: &[Tensor<f64>]) -> Result<Self> {
        let settings = state.run.train.swd.clone();
        let mut rng = step_rng(state.run.seed, u64::MAX, STREAM_VALIDATION);
        let latents = state.latents(state.run.train.validation_samples, state.run.latent.spatial, &mut rng);
        Ok(Self { latents, reference: SetDescriptor::new(reference, &settings)?, settings })
    }

    /// `(d_W, mean f_s)` of the current generator; `f_s` is `None` without a
    /// time channel.
    pub fn evaluate(&self, state: &mut GanState<T>) -> Result<(f64, Option<f64>)> {
        let samples = generate(&mut state.g, &self.latents, state.run.train.batch_size)?;
        let d_w = self.reference.distance(&SetDescriptor::new(&samples, &self.settings)?, &self.settings)?.mean;
        let fs: Vec<f64> = samples.iter().filter_map(|s| sample_superposition(s).ok().flatten()).collect();
        let f_s = (!fs.is_empty()).then(|| fs.iter().sum::<f64>() / fs.len() as f64);
        Ok((d_w, f_s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    /// `None` before the first update.
    pub g_loss: Option<f64>,
    pub d_loss: Option<f64>,
    pub d_w: f64,
    pub f_s: Option<f64>,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: &str = "iteration,g_loss,d_loss,d_w,f_s,wall_time_s";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            opt(self.g_loss),
            opt(self.d_loss),
            self.d_w,
            opt(self.f_s),
            self.wall_time_s
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(GanError::Format(format!("metrics row {line:?} has {} fields", f.len())));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| GanError::Format(format!("bad number {s:?}"))) };
        let o = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
        Ok(Self {
            iteration: f[0].parse().map_err(|_| GanError::Format(format!("bad iteration {:?}", f[0])))?,
            g_loss: o(f[1])?,
            d_loss: o(f[2])?,
            d_w: num(f[3])?,
            f_s: o(f[4])?,
            wall_time_s: num(f[5])?,
        })
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(GanError::Format("metrics header mismatch".into()));
    }
    lines.filter(|l| !l.trim().is_empty()).map(MetricsRow::parse).collect()
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Record elapsed seconds; off gives byte-reproducible metrics files.
    pub wall_time: bool,
    /// Print each metrics row to stderr.
    pub verbose: bool,
}

pub fn checkpoint_path(run_dir: &Path, iteration: u64) -> PathBuf {
    run_dir.join("checkpoints").join(format!("iter_{iteration}.ckpt"))
}

fn due(iteration: u64, interval: u64, total: u64) -> bool {
    iteration % interval == 0 || iteration == total
}

/// Trains from the state's current iteration up to `total_g_iterations`,
/// writing `config.json`, `metrics.csv` and checkpoints under `run_dir`.
///
/// Resuming keeps the on-cadence metrics rows up to the current iteration, so
/// a resumed run logs the same rows as an uninterrupted one. On a non-finite
/// loss a `diagnostic.txt` is written and the error returned; files written
/// so far stay valid.
pub fn train<T: Scalar>(
    state: &mut GanState<T>,
    data: &[Tensor<T>],
    validator: &Validator<T>,
    run_dir: &Path,
    opts: &TrainOptions,
) -> Result<Vec<MetricsRow>> {
    fs::create_dir_all(run_dir.join("checkpoints"))?;
    fs::write(run_dir.join("config.json"), serde_json::to_string_pretty(&state.run)? + "\n")?;
    let metrics_path = run_dir.join("metrics.csv");
    let start = state.iteration;
    let mut rows: Vec<MetricsRow> = if start > 0 && metrics_path.exists() {
        let vi = state.run.train.validation_interval;
        read_metrics(&metrics_path)?.into_iter().filter(|r| r.iteration <= start && r.iteration % vi == 0).collect()
    } else {
        Vec::new()
    };
    let mut file = fs::File::create(&metrics_path)?;
    writeln!(file, "{METRICS_HEADER}")?;
    for r in &rows {
        writeln!(file, "{}", r.to_csv())?;
    }
    let total = state.run.train.total_g_iterations;
    let (vi, ci) = (state.run.train.validation_interval, state.run.train.checkpoint_interval);
    let clock = Instant::now();
    let elapsed = |c: &Instant| if opts.wall_time { c.elapsed().as_secs_f64() } else { 0.0 };
    let emit = |row: MetricsRow, rows: &mut Vec<MetricsRow>, file: &mut fs::File| -> Result<()> {
        writeln!(file, "{}", row.to_csv())?;
        file.flush()?;
        if opts.verbose {
            eprintln!("{}", row.to_csv());
        }
        rows.push(row);
        Ok(())
    };
    if start == 0 {
        crate::checkpoint::save_checkpoint(state, &checkpoint_path(run_dir, 0))?;
        if total > 0 {
            let (d_w, f_s) = validator.evaluate(state)?;
            let row = MetricsRow { iteration: 0, g_loss: None, d_loss: None, d_w, f_s, wall_time_s: elapsed(&clock) };
            emit(row, &mut rows, &mut file)?;
        }
    }
    while state.iteration < total {
        let (g_loss, d_loss) = match train_iteration(state, data) {
            Ok(l) => l,
            Err(e @ GanError::NonFinite { .. }) => {
                let _ = fs::write(run_dir.join("diagnostic.txt"), format!("{e}\n"));
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let it = state.iteration;
        if due(it, vi, total) {
            let (d_w, f_s) = validator.evaluate(state)?;
            let row = MetricsRow { iteration: it, g_loss: Some(g_loss), d_loss: Some(d_loss), d_w, f_s, wall_time_s: elapsed(&clock) };
            emit(row, &mut rows, &mut file)?;
        }
        if due(it, ci, total) {
            crate::checkpoint::save_checkpoint(state, &checkpoint_path(run_dir, it))?;
        }
    }
    Ok(rows)
}
