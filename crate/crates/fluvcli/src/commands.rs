//! The subcommands as library functions; `main` only parses arguments.

use std::fs;
use std::path::{Path, PathBuf};

use fluvgan::{
    decode_checkpoint, generate, peek_checkpoint, read_metrics, train, GanState, MetricsRow, Precision, RunConfig,
    TrainOptions, Validator,
};
use geovalid::{
    classical_mds, nearest_training_samples, pairwise_swd, sample_superposition, swd_score, FsSummary, SwdReport, SwdSettings,
};
use gradcore::{Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use stratadata::{save_volume, unscale_sample, Provenance, Sample, SynthParams};

use crate::config::{resolve, CliConfig, DataConfig, DataSource, Overrides};
use crate::data::{self, Datasets};
use crate::error::{config, CliError, Result};
use crate::render::{line_plot, save_mid_slices};

/// A checkpointed model at either precision.
pub enum Model {
    F32(GanState<f32>),
    F64(GanState<f64>),
}

impl Model {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let (tag, _) = peek_checkpoint(&bytes)?;
        match tag.as_str() {
            "f32" => Ok(Self::F32(decode_checkpoint(&bytes)?)),
            _ => Ok(Self::F64(decode_checkpoint(&bytes)?)),
        }
    }

    pub fn run(&self) -> &RunConfig {
        match self {
            Self::F32(s) => &s.run,
            Self::F64(s) => &s.run,
        }
    }

    /// Evaluation-mode sample `[C, X, Y, Z]` for one latent `[dim, x, y, z]`.
    pub fn sample(&mut self, z: &Tensor<f64>) -> Result<Tensor<f64>> {
        fn one<T: Scalar>(s: &mut GanState<T>, z: &Tensor<f64>) -> Result<Tensor<f64>> {
            let mut shape = vec![1];
            shape.extend_from_slice(z.shape());
            let batch = z.cast::<T>().reshape(shape)?;
            Ok(generate(&mut s.g, &batch, 1)?.remove(0))
        }
        match self {
            Self::F32(s) => one(s, z),
            Self::F64(s) => one(s, z),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::F32(s) => format!("{}\n{}", s.g.describe(), s.d.describe()),
            Self::F64(s) => format!("{}\n{}", s.g.describe(), s.d.describe()),
        }
    }
}

/// `count` latents `[dim, spatial]` drawn in order from `seed`.
pub fn draw_latents(run: &RunConfig, seed: u64, count: usize) -> Vec<Tensor<f64>> {
    let l = &run.latent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Tensor::randn(vec![l.dim, l.spatial[0], l.spatial[1], l.spatial[2]], &mut rng)).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Cell size recorded in generated volumes.
pub fn cell_size(data: &DataConfig) -> [f32; 3] {
    match &data.source {
        DataSource::Synth { params, .. } => params.cell_size,
        DataSource::Directory { path } => stratadata::dataset::list_volumes(path)
            .ok()
            .and_then(|p| stratadata::load_volume(&p[0]).ok())
            .map(|v| v.cell_size)
            .unwrap_or(SynthParams::default().cell_size),
    }
}

/// Unscaled FLVD of a generated sample; time becomes relative age in `[0, 1]`.
pub fn save_generated(sample: &Tensor<f64>, index: u64, cell: [f32; 3], path: &Path) -> Result<()> {
    let s = Sample { tensor: sample.clone(), provenance: Provenance { realization: index, offsets: [0; 3], time_range: None, cell_size: cell } };
    save_volume(&unscale_sample(&s)?, path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// The data section echoed by the run that wrote `checkpoint`, when found.
pub fn run_data_config(checkpoint: &Path) -> Option<DataConfig> {
    let run_dir = checkpoint.parent()?.parent()?;
    let text = fs::read_to_string(run_dir.join("run.json")).ok()?;
    resolve(Some(&text), &Overrides::default()).ok().map(|c| c.data)
}

// ---------------------------------------------------------------- train

pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub run_dir: PathBuf,
}

fn train_at<T: Scalar>(cfg: &CliConfig, data: &Datasets, resume: Option<&Path>, verbose: bool) -> Result<Vec<MetricsRow>> {
    let mut state = match resume {
        Some(p) => {
            let mut s: GanState<T> = fluvgan::load_checkpoint(p)?;
            let mut want = cfg.run_config();
            want.train.total_g_iterations = s.run.train.total_g_iterations;
            if s.run != want {
                return config(format!("{} was trained with a different configuration", p.display()));
            }
            s.run.train.total_g_iterations = cfg.train.total_g_iterations;
            s
        }
        None => GanState::<T>::new(cfg.run_config())?,
    };
    let train_set: Vec<Tensor<T>> = data.train.iter().map(|t| t.cast()).collect();
    let validator = Validator::new(&state, &data.validation)?;
    let opts = TrainOptions { wall_time: cfg.wall_time, verbose };
    Ok(train(&mut state, &train_set, &validator, &cfg.out, &opts)?)
}

fn train_loaded(cfg: &CliConfig, data: &Datasets, resume: Option<&Path>, verbose: bool) -> Result<Vec<MetricsRow>> {
    create_dir(&cfg.out)?;
    write(&cfg.out.join("run.json"), cfg.to_json())?;
    match cfg.train.precision {
        Precision::F32 => train_at::<f32>(cfg, data, resume, verbose),
        Precision::F64 => train_at::<f64>(cfg, data, resume, verbose),
    }
}

/// Trains into `cfg.out`, echoing the resolved configuration as `run.json`.
pub fn cmd_train(cfg: &CliConfig, resume: Option<&Path>, verbose: bool) -> Result<TrainOutcome> {
    let data = data::load(&cfg.data)?;
    let rows = train_loaded(cfg, &data, resume, verbose)?;
    Ok(TrainOutcome { rows, run_dir: cfg.out.clone() })
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Serialize)]
pub struct GenerateArgs {
    pub checkpoint: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub png: bool,
    pub cell_size: [f32; 3],
}

/// Samples `count` latents from `seed` in order and writes each output,
/// unfiltered, as `sample_{i}.flvd`.
pub fn cmd_generate(a: &GenerateArgs) -> Result<Vec<Tensor<f64>>> {
    let mut model = Model::load(&a.checkpoint)?;
    if a.count == 0 {
        return Ok(Vec::new());
    }
    create_dir(&a.out)?;
    write(&a.out.join("generate.json"), to_json(a))?;
    let latents = draw_latents(model.run(), a.seed, a.count);
    let mut out = Vec::with_capacity(a.count);
    for (i, z) in latents.iter().enumerate() {
        let s = model.sample(z)?;
        save_generated(&s, i as u64, a.cell_size, &a.out.join(format!("sample_{i:05}.flvd")))?;
        if a.png {
            save_mid_slices(&s, &a.out, &format!("sample_{i:05}"))?;
        }
        out.push(s);
    }
    Ok(out)
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Serialize)]
pub struct ValidateArgs {
    pub checkpoint: PathBuf,
    pub data: DataConfig,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Reference crops at both y extremities of each realization.
    pub extremity: bool,
    /// Nearest training sample of every generated sample.
    pub nearest: bool,
    /// Items per set in the MDS embedding.
    pub mds_items: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub generated: usize,
    pub reference: usize,
    pub d_w: SwdReport,
    pub f_s: Option<FsSummary>,
    pub f_s_values: Vec<Option<f64>>,
    /// `(set, index, x, y)` with set `generated` or `reference`.
    pub mds: Vec<(String, usize, f64, f64)>,
    /// `(sample, training realization id, distance)`.
    pub nearest: Vec<(usize, u64, f64)>,
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<ValidationReport> {
    let mut model = Model::load(&a.checkpoint)?;
    if a.count == 0 {
        return config("validation needs at least one generated sample");
    }
    let settings: SwdSettings = model.run().train.swd.clone();
    let sets = data::load(&a.data)?;
    let ref_ids = if sets.plan.test.is_empty() { &sets.plan.validation } else { &sets.plan.test };
    let reference: Vec<Tensor<f64>> = if a.extremity {
        data::extremity_samples(&a.data, ref_ids)?.into_iter().map(|s| s.tensor).collect()
    } else if sets.plan.test.is_empty() {
        sets.validation.clone()
    } else {
        sets.test.clone()
    };
    if reference.is_empty() {
        return config("empty reference set; configure validation or test realizations");
    }
    let generated: Vec<Tensor<f64>> =
        draw_latents(model.run(), a.seed, a.count).iter().map(|z| model.sample(z)).collect::<Result<_>>()?;

    let d_w = swd_score(&generated, &reference, &settings)?;
    let f_s_values: Vec<Option<f64>> = generated.iter().map(sample_superposition).collect::<geovalid::Result<_>>()?;
    let present: Vec<f64> = f_s_values.iter().flatten().copied().collect();
    let f_s = FsSummary::from_values(&present);

    let k = a.mds_items;
    let pooled: Vec<Tensor<f64>> = generated.iter().take(k).chain(reference.iter().take(k)).cloned().collect();
    let n_gen = generated.len().min(k);
    let mut mds = Vec::new();
    if pooled.len() >= 2 {
        let coords = classical_mds(&pairwise_swd(&pooled, &settings)?, 2)?;
        for (i, c) in coords.iter().enumerate() {
            let (set, idx) = if i < n_gen { ("generated", i) } else { ("reference", i - n_gen) };
            mds.push((set.to_string(), idx, c[0], c.get(1).copied().unwrap_or(0.0)));
        }
    }
    let nearest = if a.nearest {
        nearest_training_samples(&generated, &sets.train, &settings)?
            .into_iter()
            .enumerate()
            .map(|(i, (j, d))| (i, sets.plan.train[j], d))
            .collect()
    } else {
        Vec::new()
    };
    let report = ValidationReport { generated: generated.len(), reference: reference.len(), d_w, f_s, f_s_values, mds, nearest };

    create_dir(&a.out)?;
    write(&a.out.join("validate.json"), to_json(a))?;
    let mut summary = serde_json::to_value(&report).expect("serializable");
    let obj = summary.as_object_mut().expect("object");
    for key in ["f_s_values", "mds", "nearest"] {
        obj.remove(key);
    }
    write(&a.out.join("report.json"), to_json(&summary))?;
    let mut csv = String::from("sample,f_s\n");
    for (i, f) in report.f_s_values.iter().enumerate() {
        csv += &format!("{i},{}\n", f.map(|v| v.to_string()).unwrap_or_default());
    }
    write(&a.out.join("fs.csv"), csv)?;
    let mut csv = String::from("index,set,mds_x,mds_y\n");
    for (s, i, x, y) in &report.mds {
        csv += &format!("{i},{s},{x},{y}\n");
    }
    write(&a.out.join("mds.csv"), csv)?;
    let mut csv = String::from("level,d_w\n");
    for (l, d) in report.d_w.per_level.iter().enumerate() {
        csv += &format!("{l},{d}\n");
    }
    csv += &format!("mean,{}\n", report.d_w.mean);
    write(&a.out.join("dw.csv"), csv)?;
    if a.nearest {
        let mut csv = String::from("sample,training_realization,distance\n");
        for (i, id, d) in &report.nearest {
            csv += &format!("{i},{id},{d}\n");
        }
        write(&a.out.join("nearest.csv"), csv)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- interpolate

#[derive(Debug, Clone, Serialize)]
pub struct InterpolateArgs {
    pub checkpoint: PathBuf,
    /// Seeds of the corner latents `z_00, z_01, z_10, z_11`.
    pub corners: [u64; 4],
    pub grid: usize,
    pub spherical: bool,
    pub out: PathBuf,
    pub png: bool,
    pub cell_size: [f32; 3],
}

/// `(1-u)(1-v) z00 + u(1-v) z10 + (1-u)v z01 + uv z11`.
pub fn bilinear(z: &[Tensor<f64>; 4], u: f64, v: f64) -> Tensor<f64> {
    let [z00, z01, z10, z11] = z;
    Tensor::from_fn(z00.shape().to_vec(), |i| {
        (1.0 - u) * (1.0 - v) * z00.data()[i] + u * (1.0 - v) * z10.data()[i] + (1.0 - u) * v * z01.data()[i] + u * v * z11.data()[i]
    })
}

fn slerp(a: &Tensor<f64>, b: &Tensor<f64>, t: f64) -> Tensor<f64> {
    if t == 0.0 {
        return a.clone();
    }
    if t == 1.0 {
        return b.clone();
    }
    let cos = (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
    let theta = cos.acos();
    if theta.abs() < 1e-9 {
        return a.zip_map(b, |x, y| (1.0 - t) * x + t * y);
    }
    let (wa, wb) = (((1.0 - t) * theta).sin() / theta.sin(), (t * theta).sin() / theta.sin());
    a.zip_map(b, |x, y| wa * x + wb * y)
}

/// Spherical interpolation along u, then along v.
pub fn spherical(z: &[Tensor<f64>; 4], u: f64, v: f64) -> Tensor<f64> {
    let [z00, z01, z10, z11] = z;
    slerp(&slerp(z00, z10, u), &slerp(z01, z11, u), v)
}

/// `grid x grid` samples in row-major order over `(v, u)`.
pub fn cmd_interpolate(a: &InterpolateArgs) -> Result<Vec<Tensor<f64>>> {
    if a.grid < 2 {
        return config("interpolation grid must be at least 2");
    }
    let mut model = Model::load(&a.checkpoint)?;
    let z: [Tensor<f64>; 4] = std::array::from_fn(|i| draw_latents(model.run(), a.corners[i], 1).remove(0));
    create_dir(&a.out)?;
    write(&a.out.join("interpolate.json"), to_json(a))?;
    let g = a.grid;
    let mut out = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            let (u, v) = (i as f64 / (g - 1) as f64, j as f64 / (g - 1) as f64);
            let zi = if a.spherical { spherical(&z, u, v) } else { bilinear(&z, u, v) };
            let s = model.sample(&zi)?;
            let stem = format!("interp_{j:02}_{i:02}");
            save_generated(&s, (j * g + i) as u64, a.cell_size, &a.out.join(format!("{stem}.flvd")))?;
            if a.png {
                save_mid_slices(&s, &a.out, &stem)?;
            }
            out.push(s);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- extrapolate

#[derive(Debug, Clone, Serialize)]
pub struct ExtrapolateArgs {
    pub checkpoint: PathBuf,
    /// Latent cells added per axis.
    pub extra: [usize; 3],
    pub seed: u64,
    pub count: usize,
    pub out: PathBuf,
    pub png: bool,
    pub cell_size: [f32; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtrapolationReport {
    pub latent_spatial: [usize; 3],
    pub output_shape: Vec<usize>,
    pub f_s: Vec<Option<f64>>,
    pub f_s_summary: Option<FsSummary>,
}

/// Latents of [`draw_latents`] embedded at the origin of a grid enlarged by
/// `extra`, the new cells drawn fresh from a second stream of `seed`.
pub fn enlarged_latents(run: &RunConfig, seed: u64, count: usize, extra: [usize; 3]) -> Vec<Tensor<f64>> {
    let base = draw_latents(run, seed, count);
    let l = &run.latent;
    let big: [usize; 3] = std::array::from_fn(|d| l.spatial[d] + extra[d]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    base.into_iter()
        .map(|z| {
            if extra == [0; 3] {
                return z;
            }
            let mut e = Tensor::randn(vec![l.dim, big[0], big[1], big[2]], &mut rng);
            let [sx, sy, sz] = l.spatial;
            let data = e.data_mut();
            for c in 0..l.dim {
                for x in 0..sx {
                    for y in 0..sy {
                        for k in 0..sz {
                            data[((c * big[0] + x) * big[1] + y) * big[2] + k] = z.data()[((c * sx + x) * sy + y) * sz + k];
                        }
                    }
                }
            }
            e
        })
        .collect()
}

pub fn cmd_extrapolate(a: &ExtrapolateArgs) -> Result<(Vec<Tensor<f64>>, ExtrapolationReport)> {
    let mut model = Model::load(&a.checkpoint)?;
    let run = model.run().clone();
    let latents = enlarged_latents(&run, a.seed, a.count, a.extra);
    create_dir(&a.out)?;
    write(&a.out.join("extrapolate.json"), to_json(a))?;
    let mut samples = Vec::with_capacity(a.count);
    for (i, z) in latents.iter().enumerate() {
        let s = model.sample(z)?;
        save_generated(&s, i as u64, a.cell_size, &a.out.join(format!("extrap_{i:05}.flvd")))?;
        if a.png {
            save_mid_slices(&s, &a.out, &format!("extrap_{i:05}"))?;
        }
        samples.push(s);
    }
    let f_s: Vec<Option<f64>> = samples.iter().map(sample_superposition).collect::<geovalid::Result<_>>()?;
    let present: Vec<f64> = f_s.iter().flatten().copied().collect();
    let report = ExtrapolationReport {
        latent_spatial: std::array::from_fn(|d| run.latent.spatial[d] + a.extra[d]),
        output_shape: samples.first().map(|s| s.shape().to_vec()).unwrap_or_default(),
        f_s_summary: FsSummary::from_values(&present),
        f_s,
    };
    write(&a.out.join("report.json"), to_json(&report))?;
    Ok((samples, report))
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub preset: String,
    pub repeat: usize,
    pub seed: u64,
    /// `completed` or `collapsed`.
    pub status: String,
    pub iterations: u64,
    pub final_d_w: Option<f64>,
    pub mean_d_w: Option<f64>,
    pub final_f_s: Option<f64>,
    pub mean_f_s: Option<f64>,
}

pub const ABLATION_HEADER: &str = "preset,repeat,seed,status,iterations,final_d_w,mean_d_w,final_f_s,mean_f_s";

impl AblationRow {
    pub fn to_csv(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.preset,
            self.repeat,
            self.seed,
            self.status,
            self.iterations,
            o(self.final_d_w),
            o(self.mean_d_w),
            o(self.final_f_s),
            o(self.mean_f_s)
        )
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Trains `repeats` models per preset, with seeds `seed, seed + 1, ...`,
/// each into `out/{preset}/seed_{seed}`; runs that abort on a non-finite
/// loss are reported as collapsed.
pub fn cmd_ablate(doc: Option<&str>, ov: &Overrides, presets: &[String], repeats: usize) -> Result<Vec<AblationRow>> {
    if presets.is_empty() || repeats == 0 {
        return config("ablation needs at least one preset and one repeat");
    }
    let base = resolve(doc, ov)?;
    let data = data::load(&base.data)?;
    let mut jobs = Vec::new();
    for p in presets {
        for r in 0..repeats {
            let seed = base.seed + r as u64;
            let job_ov = Overrides { preset: Some(p.clone()), seed: Some(seed), out: Some(base.out.join(p).join(format!("seed_{seed}"))), ..ov.clone() };
            jobs.push((p.clone(), r, resolve(doc, &job_ov)?));
        }
    }
    let rows: Vec<AblationRow> = jobs
        .par_iter()
        .map(|(preset, repeat, cfg)| {
            let (status, rows) = match train_loaded(cfg, &data, None, false) {
                Ok(rows) => ("completed", rows),
                Err(CliError::Numerical(_)) => ("collapsed", read_metrics(cfg.out.join("metrics.csv")).unwrap_or_default()),
                Err(e) => return Err(e),
            };
            let d_w: Vec<f64> = rows.iter().map(|r| r.d_w).collect();
            let f_s: Vec<f64> = rows.iter().filter_map(|r| r.f_s).collect();
            Ok(AblationRow {
                preset: preset.clone(),
                repeat: *repeat,
                seed: cfg.seed,
                status: status.into(),
                iterations: rows.last().map_or(0, |r| r.iteration),
                final_d_w: d_w.last().copied(),
                mean_d_w: mean(&d_w),
                final_f_s: rows.last().and_then(|r| r.f_s),
                mean_f_s: mean(&f_s),
            })
        })
        .collect::<Result<_>>()?;
    let mut csv = format!("{ABLATION_HEADER}\n");
    for r in &rows {
        csv += &(r.to_csv() + "\n");
    }
    create_dir(&base.out)?;
    write(&base.out.join("ablation.csv"), csv)?;
    Ok(rows)
}

// ---------------------------------------------------------------- synth

/// Writes realizations `1..=count` of the configured synthetic source as
/// `realization_{id}.flvd`.
pub fn cmd_synth(data: &DataConfig, count: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let params = match &data.source {
        DataSource::Synth { params, .. } => params.clone(),
        DataSource::Directory { .. } => SynthParams::default(),
    };
    create_dir(out)?;
    let mut paths = Vec::with_capacity(count);
    for id in 1..=count as u64 {
        let v = stratadata::synth_generate(stratadata::realization_seed(data.seed, id), &params)?;
        let p = out.join(format!("realization_{id:05}.flvd"));
        save_volume(&v, &p)?;
        paths.push(p);
    }
    Ok(paths)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub rows: usize,
    pub files: Vec<PathBuf>,
}

fn latest_checkpoint(run_dir: &Path) -> Option<PathBuf> {
    let dir = run_dir.join("checkpoints");
    fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let it: u64 = p.file_name()?.to_str()?.strip_prefix("iter_")?.strip_suffix(".ckpt")?.parse().ok()?;
            Some((it, p))
        })
        .max_by_key(|(it, _)| *it)
        .map(|(_, p)| p)
}

/// Text summary, metric curves and sample slices of a run directory under
/// `out`. A run without metric rows gets the summary only.
pub fn cmd_report(run_dir: &Path, out: &Path, samples: usize, seed: u64) -> Result<ReportSummary> {
    let metrics = run_dir.join("metrics.csv");
    if !metrics.exists() {
        return Err(CliError::Data(format!("{} not found", metrics.display())));
    }
    let rows = read_metrics(&metrics)?;
    create_dir(out)?;
    let mut files = Vec::new();
    let mut text = format!("run: {}\nmetric rows: {}\n", run_dir.display(), rows.len());
    if let Some(last) = rows.last() {
        text += &format!("last iteration: {}\nfinal d_W: {}\n", last.iteration, last.d_w);
        if let Some(best) = rows.iter().min_by(|a, b| a.d_w.total_cmp(&b.d_w)) {
            text += &format!("best d_W: {} at iteration {}\n", best.d_w, best.iteration);
        }
        if let Some(f) = last.f_s {
            text += &format!("final f_s: {f}\n");
        }
    }
    let ckpt = latest_checkpoint(run_dir);
    let mut model = match &ckpt {
        Some(p) => Some(Model::load(p)?),
        None => None,
    };
    if let (Some(p), Some(m)) = (&ckpt, &model) {
        text += &format!("checkpoint: {}\n\n{}", p.display(), m.describe());
    }
    let summary = out.join("summary.txt");
    write(&summary, text)?;
    files.push(summary);
    if rows.is_empty() {
        return Ok(ReportSummary { rows: 0, files });
    }
    let d_w: Vec<(f64, f64)> = rows.iter().map(|r| (r.iteration as f64, r.d_w)).collect();
    let p = out.join("d_w.png");
    line_plot(&d_w).save(&p)?;
    files.push(p);
    let f_s: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.f_s.map(|f| (r.iteration as f64, f))).collect();
    if !f_s.is_empty() {
        let p = out.join("f_s.png");
        line_plot(&f_s).save(&p)?;
        files.push(p);
    }
    if let Some(m) = model.as_mut() {
        let run = m.run().clone();
        for (i, z) in draw_latents(&run, seed, samples).iter().enumerate() {
            let s = m.sample(z)?;
            let stem = format!("sample_{i:02}");
            save_mid_slices(&s, out, &stem)?;
            for c in 0..s.shape()[0] {
                files.push(out.join(format!("{stem}_c{c}_h.png")));
                files.push(out.join(format!("{stem}_c{c}_v.png")));
            }
        }
    }
    Ok(ReportSummary { rows: rows.len(), files })
}
