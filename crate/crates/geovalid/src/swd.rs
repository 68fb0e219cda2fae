//! Sliced Wasserstein distances between patch distributions.

use gradcore::Tensor;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ValidError};
use crate::patches::{extract_patches, PatchSet};
use crate::pyramid::laplacian_pyramid;

/// Exact 1-Wasserstein distance between two equal-size empirical measures
/// given as sorted values.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ValidError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// `n` unit directions in `dim` dimensions, uniform on the sphere.
pub fn random_directions(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Seed-derived row subset of size `k` from `n`, in ascending order.
fn subsample(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5ab5_a3b1), n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Projections of every patch on every direction, `[direction][patch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub values: Vec<Vec<f64>>,
}

impl Projected {
    pub fn new(set: &PatchSet, directions: &[Vec<f64>]) -> Self {
        let values = directions
            .iter()
            .map(|u| (0..set.len()).map(|i| set.row(i).iter().zip(u).map(|(a, b)| a * b).sum()).collect())
            .collect();
        Self { values }
    }

    pub fn count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Sorted projections restricted to `rows`.
    fn sorted(&self, rows: Option<&[usize]>) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|p| {
                let mut v: Vec<f64> = match rows {
                    Some(r) => r.iter().map(|&i| p[i]).collect(),
                    None => p.clone(),
                };
                v.sort_by(f64::total_cmp);
                v
            })
            .collect()
    }
}

/// Mean 1D Wasserstein distance over the shared directions. The larger set
/// is subsampled (seeded) to the size of the smaller.
pub fn sliced_distance(a: &Projected, b: &Projected, seed: u64) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(ValidError::LengthMismatch(a.values.len(), b.values.len()));
    }
    let (na, nb) = (a.count(), b.count());
    let k = na.min(nb);
    if k == 0 || a.values.is_empty() {
        return Err(ValidError::Invalid("sliced distance needs non-empty patch sets".into()));
    }
    let ra = (na > k).then(|| subsample(na, k, seed));
    let rb = (nb > k).then(|| subsample(nb, k, seed));
    let sa = a.sorted(ra.as_deref());
    let sb = b.sorted(rb.as_deref());
    let mut total = 0.0;
    for (x, y) in sa.iter().zip(&sb) {
        total += wasserstein_1d(x, y)?;
    }
    Ok(total / sa.len() as f64)
}

pub fn sliced_wasserstein(a: &PatchSet, b: &PatchSet, n_projections: usize, seed: u64) -> Result<f64> {
    if a.dim != b.dim {
        return Err(ValidError::LengthMismatch(a.dim, b.dim));
    }
    if n_projections == 0 {
        return Err(ValidError::Invalid("need at least one projection".into()));
    }
    let dirs = random_directions(a.dim, n_projections, seed);
    sliced_distance(&Projected::new(a, &dirs), &Projected::new(b, &dirs), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwdSettings {
    pub patch_shape: [usize; 3],
    pub patches_per_level: usize,
    pub n_projections: usize,
    pub max_levels: usize,
    pub seed: u64,
}

impl Default for SwdSettings {
    fn default() -> Self {
        Self { patch_shape: [7, 7, 3], patches_per_level: 2048, n_projections: 128, max_levels: 3, seed: 0 }
    }
}

impl SwdSettings {
    fn level_seed(&self, level: usize) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(level as u64 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwdReport {
    pub mean: f64,
    pub per_level: Vec<f64>,
}

/// Per-level projected patches of one sample set, reusable across many
/// comparisons with the same settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SetDescriptor {
    pub levels: Vec<Projected>,
}

impl SetDescriptor {
    pub fn new(samples: &[Tensor<f64>], settings: &SwdSettings) -> Result<Self> {
        if samples.is_empty() {
            return Err(ValidError::Invalid("empty sample set".into()));
        }
        let pyramids = samples
            .iter()
            .map(|s| laplacian_pyramid(s, settings.patch_shape, settings.max_levels))
            .collect::<Result<Vec<_>>>()?;
        let n_levels = pyramids[0].levels.len();
        let mut levels = Vec::with_capacity(n_levels);
        for l in 0..n_levels {
            let vols: Vec<Tensor<f64>> = pyramids.iter().map(|p| p.levels[l].clone()).collect();
            let seed = settings.level_seed(l);
            let set = extract_patches(&vols, l, settings.patch_shape, settings.patches_per_level, seed)?;
            let dirs = random_directions(set.dim, settings.n_projections, seed);
            levels.push(Projected::new(&set, &dirs));
        }
        Ok(Self { levels })
    }

    pub fn distance(&self, other: &Self, settings: &SwdSettings) -> Result<SwdReport> {
        if self.levels.len() != other.levels.len() {
            return Err(ValidError::LengthMismatch(self.levels.len(), other.levels.len()));
        }
        let per_level = self
            .levels
            .iter()
            .zip(&other.levels)
            .enumerate()
            .map(|(l, (a, b))| sliced_distance(a, b, settings.level_seed(l)))
            .collect::<Result<Vec<_>>>()?;
        let mean = per_level.iter().sum::<f64>() / per_level.len() as f64;
        Ok(SwdReport { mean, per_level })
    }
}

/// Multiscale sliced Wasserstein distance `d_W` between two sample sets of
/// `[C, X, Y, Z]` tensors: the mean over pyramid levels plus the per-level
/// values.
pub fn swd_score(a: &[Tensor<f64>], b: &[Tensor<f64>], settings: &SwdSettings) -> Result<SwdReport> {
    if let (Some(x), Some(y)) = (a.first(), b.first()) {
        if x.shape() != y.shape() {
            return Err(ValidError::Invalid(format!("sample shapes differ: {:?} vs {:?}", x.shape(), y.shape())));
        }
    }
    SetDescriptor::new(a, settings)?.distance(&SetDescriptor::new(b, settings)?, settings)
}
