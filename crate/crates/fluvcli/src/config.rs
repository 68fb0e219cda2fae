//! The CLI run configuration: a preset resolved into full architecture
//! flags, training settings and a data source, echoed back as JSON.

use std::path::PathBuf;

use fluvgan::{resolve_preset, ArchitectureConfig, LatentSpec, RunConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use stratadata::{ChannelSet, PipelineSpec, SplitMode, SynthParams};

use crate::error::{config, CliError, Result};

pub const DEFAULT_PRESET: &str = "arch4";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Procedural realizations numbered `1..=count`.
    Synth {
        #[serde(default)]
        params: SynthParams,
        #[serde(default = "default_count")]
        count: usize,
    },
    /// FLVD files of a directory, numbered by file-name order from 1.
    Directory { path: PathBuf },
}

fn default_count() -> usize {
    512
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synth { params: SynthParams::default(), count: default_count() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { n_train: 448, n_val: 64, n_test: 0, mode: SplitMode::FixedTail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub pipeline: PipelineSpec,
    /// Replace the coarse fraction by its three Folk facies classes.
    pub facies: bool,
    pub split: SplitSpec,
    /// Seed of realization generation, crop placement and random splits.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { source: DataSource::default(), pipeline: PipelineSpec::default(), facies: false, split: SplitSpec::default(), seed: 1 }
    }
}

impl DataConfig {
    pub fn channels(&self) -> usize {
        self.pipeline.channels.count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub architecture: ArchitectureConfig,
    pub latent: LatentSpec,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub out: PathBuf,
    /// Record elapsed seconds in the metrics; off keeps runs byte-reproducible.
    pub wall_time: bool,
}

impl CliConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig { seed: self.seed, architecture: self.architecture.clone(), latent: self.latent.clone(), train: self.train.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Command-line settings applied on top of the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub g_iters: Option<u64>,
    /// `synth`, `synth-facies` or a directory of FLVD files.
    pub data: Option<String>,
    pub wall_time: bool,
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                // A tagged object names its own variant and replaces the default one.
                let tagged = v.get("source").is_some();
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && !tagged => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn bad_json(e: serde_json::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn data_override(data: &mut DataConfig, spec: &str) {
    match spec {
        "synth" | "synth-facies" => {
            if !matches!(data.source, DataSource::Synth { .. }) {
                data.source = DataSource::default();
            }
            data.facies = spec == "synth-facies";
        }
        dir => data.source = DataSource::Directory { path: PathBuf::from(dir) },
    }
    if data.facies {
        data.pipeline.channels = ChannelSet::Coarse;
    }
}

/// Resolves a config document (or nothing) plus overrides into a complete
/// configuration. The preset named by `"preset"` (default arch4) supplies
/// the architecture, which `"architecture"` keys then amend; target shape
/// and output channels follow the data pipeline.
pub fn resolve(doc: Option<&str>, ov: &Overrides) -> Result<CliConfig> {
    let mut user = match doc {
        Some(text) => serde_json::from_str::<Value>(text).map_err(bad_json)?,
        None => Value::Object(Map::new()),
    };
    let Some(obj) = user.as_object_mut() else { return config("config document must be a JSON object") };
    let preset = match obj.remove("preset") {
        Some(Value::String(p)) => Some(p),
        Some(Value::Null) | None => None,
        Some(other) => return config(format!("preset must be a string, got {other}")),
    };
    let preset = ov.preset.clone().or(preset);
    let explicit = |key: &str| obj.get("architecture").and_then(|a| a.get(key)).cloned();
    let (explicit_shape, explicit_channels) = (explicit("target_shape"), explicit("channels_out"));

    let base_arch = resolve_preset(preset.as_deref().unwrap_or(DEFAULT_PRESET))?;
    let base = CliConfig {
        seed: 0,
        architecture: base_arch,
        latent: LatentSpec::default(),
        train: TrainConfig::default(),
        data: DataConfig::default(),
        out: PathBuf::from("run"),
        wall_time: false,
    };
    let mut merged = serde_json::to_value(&base).map_err(bad_json)?;
    merge(&mut merged, user);
    let mut c: CliConfig = serde_json::from_value(merged).map_err(bad_json)?;

    if let Some(s) = ov.seed {
        c.seed = s;
    }
    if let Some(o) = &ov.out {
        c.out = o.clone();
    }
    if let Some(n) = ov.g_iters {
        c.train.total_g_iterations = n;
    }
    if let Some(d) = &ov.data {
        data_override(&mut c.data, d);
    }
    c.wall_time |= ov.wall_time;
    if c.data.facies && c.data.pipeline.channels != ChannelSet::Coarse {
        return config("facies data is single-channel; set pipeline.channels to Coarse");
    }

    let shape = c.data.pipeline.sample_size;
    let channels = c.data.channels();
    if let Some(v) = explicit_shape {
        if v != serde_json::to_value(shape).map_err(bad_json)? {
            return config(format!("architecture.target_shape {v} differs from data sample_size {shape:?}"));
        }
    }
    if let Some(v) = explicit_channels {
        if v != Value::from(channels) {
            return config(format!("architecture.channels_out {v} differs from the {channels} data channels"));
        }
    }
    c.architecture.target_shape = shape;
    c.architecture.channels_out = channels;
    c.architecture.validate()?;
    c.latent.validate(shape)?;
    c.train.validate()?;
    Ok(c)
}
