//! Stratigraphy volumes: the FLVD container, the crop / fill / scale
//! preprocessing pipeline, dataset splits and a synthetic channel-belt
//! generator.

mod error;

pub mod dataset;
pub mod preprocess;
pub mod split;
pub mod synth;
pub mod volume;

pub use dataset::{directory_samples, preprocess, realization_seed, synth_samples, PipelineSpec};
pub use error::{DataError, Result};
pub use preprocess::{
    crop_sample, crop_vertical, extremity_offsets, fill_above_topography, scale_sample, unscale_sample, unscale_values,
    ChannelSet, CropConstraint, CropMode, Provenance, Sample,
};
pub use split::{make_split, SplitMode, SplitPlan};
pub use synth::{stream_rng, synth_generate, SynthParams};
pub use volume::{decode_volume, load_volume, save_volume, write_volume, Channel, VoxelVolume, COARSE, TIME};
