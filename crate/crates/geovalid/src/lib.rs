//! Validation metrics for generated stratigraphy: the superposition
//! fraction, multiscale sliced Wasserstein distance over Laplacian-pyramid
//! patches, classical MDS, memorization search and Folk facies.

mod error;

pub mod folk;
pub mod mds;
pub mod nearest;
pub mod patches;
pub mod pyramid;
pub mod superposition;
pub mod swd;

pub use error::{Result, ValidError};
pub use folk::{folk_facies, Facies, FaciesVolume, GrainMixing};
pub use mds::{classical_mds, pair_seed, pairwise_swd, DistanceMatrix};
pub use nearest::{nearest_training_sample, nearest_training_samples};
pub use patches::{extract_patches, PatchSet};
pub use pyramid::{laplacian_pyramid, level_extents, Pyramid};
pub use superposition::{median_sorted, sample_superposition, superposition_fraction, FsSummary};
pub use swd::{random_directions, sliced_wasserstein, swd_score, wasserstein_1d, SetDescriptor, SwdReport, SwdSettings};
