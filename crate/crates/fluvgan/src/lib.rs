//! Anisotropic 3D GAN architectures and their adversarial training.

mod build;
mod checkpoint;
mod config;
mod error;
mod network;
mod schedule;
mod trainer;

pub use build::{build_discriminator, build_generator, NetworkBuilder, Resample, SPECTRAL_WARMUP};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, peek_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{resolve_preset, ArchitectureConfig, GrowthPolicy, LatentSpec, PRESETS};
pub use error::{GanError, Result};
pub use network::{spatial_mean, Activation, Bound, Layer, Network, Role, SPECTRAL_ITERS};
pub use schedule::{channel_widths, fold_schedule, stride_schedule, Step};
pub use trainer::{
    checkpoint_path, d_step, g_step, generate, gradient_penalty, r1_penalty, read_metrics, sample_batch, step_rng,
    train, train_iteration, GanState, LossMode, MetricsRow, Precision, RunConfig, TrainConfig, TrainOptions,
    Validator, METRICS_HEADER,
};

pub type GanState32 = GanState<f32>;
pub type GanState64 = GanState<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;
