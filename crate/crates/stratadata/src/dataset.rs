//! Whole-pipeline helpers producing training samples from synthetic or
//! on-disk realizations.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::preprocess::{crop_sample, crop_vertical, fill_above_topography, scale_sample, ChannelSet, CropConstraint, CropMode, Sample};
use crate::synth::{stream_rng, synth_generate, SynthParams};
use crate::volume::{load_volume, VoxelVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSpec {
    /// Vertical window in meters above the grid base, if any.
    pub vertical_window: Option<(f64, f64)>,
    pub sample_size: [usize; 3],
    pub channels: ChannelSet,
    pub constraint: CropConstraint,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            vertical_window: None,
            sample_size: [32, 32, 8],
            channels: ChannelSet::CoarseAndTime,
            constraint: CropConstraint::None,
        }
    }
}

/// Window, fill, random crop and scale of one realization.
pub fn preprocess<R: Rng + ?Sized>(volume: &VoxelVolume, realization: u64, spec: &PipelineSpec, rng: &mut R) -> Result<Sample> {
    let v = match spec.vertical_window {
        Some((lo, hi)) => crop_vertical(volume, lo, hi)?,
        None => volume.clone(),
    };
    let v = fill_above_topography(&v)?;
    let (crop, off) = crop_sample(&v, spec.sample_size, CropMode::Random(rng), spec.constraint)?;
    scale_sample(&crop, spec.channels, realization, off)
}

/// Deterministic realization seed for id `id` of a run seeded by `seed`.
pub fn realization_seed(seed: u64, id: u64) -> u64 {
    stream_rng(seed, id).random()
}

/// Generates and preprocesses the synthetic realizations `ids`.
pub fn synth_samples(seed: u64, ids: &[u64], params: &SynthParams, spec: &PipelineSpec) -> Result<Vec<Sample>> {
    ids.iter()
        .map(|&id| {
            let v = synth_generate(realization_seed(seed, id), params)?;
            let mut rng = stream_rng(seed ^ 0x5eed_c40b, id);
            preprocess(&v, id, spec, &mut rng)
        })
        .collect()
}

/// FLVD files of a directory in file-name order.
pub fn list_volumes(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("flvd")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DataError::Invalid("no .flvd files found".into()));
    }
    Ok(paths)
}

/// Loads and preprocesses the realizations `ids` (1-based positions in
/// [`list_volumes`] order).
pub fn directory_samples(dir: impl AsRef<Path>, seed: u64, ids: &[u64], spec: &PipelineSpec) -> Result<Vec<Sample>> {
    let paths = list_volumes(dir)?;
    ids.iter()
        .map(|&id| {
            let path = paths
                .get((id as usize).wrapping_sub(1))
                .ok_or_else(|| DataError::Invalid(format!("realization {id} not among {} files", paths.len())))?;
            let v = load_volume(path)?;
            let mut rng = stream_rng(seed ^ 0x5eed_c40b, id);
            preprocess(&v, id, spec, &mut rng)
        })
        .collect()
}
