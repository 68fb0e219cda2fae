use gradcore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ValidError};

/// Variance at or below which a patch channel counts as constant.
pub const MIN_PATCH_VARIANCE: f64 = 1e-12;

/// Flattened patches (`[C, px, py, pz]` each), standardized per patch and
/// per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub dim: usize,
    pub data: Vec<f64>,
    pub patch_shape: [usize; 3],
    pub level: usize,
}

impl PatchSet {
    pub fn from_rows(dim: usize, data: Vec<f64>, patch_shape: [usize; 3], level: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(ValidError::Invalid(format!("{} values do not form rows of {dim}", data.len())));
        }
        Ok(Self { dim, data, patch_shape, level })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Standardizes each channel block of `patch` in place; false when some
/// channel is constant.
fn standardize(patch: &mut [f64], channels: usize) -> bool {
    let per = patch.len() / channels;
    for block in patch.chunks_exact_mut(per) {
        let n = per as f64;
        let mean = block.iter().sum::<f64>() / n;
        let var = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var <= MIN_PATCH_VARIANCE {
            return false;
        }
        let inv = 1.0 / var.sqrt();
        block.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    true
}

/// Draws `n_patches` patches with uniformly random volume and corner, then
/// standardizes them; constant patches are dropped, so the set may hold
/// fewer than `n_patches` rows.
pub fn extract_patches(volumes: &[Tensor<f64>], level: usize, patch: [usize; 3], n_patches: usize, seed: u64) -> Result<PatchSet> {
    let first = volumes.first().ok_or_else(|| ValidError::Invalid("no volumes".into()))?;
    let shape = first.shape().to_vec();
    if shape.len() != 4 || volumes.iter().any(|v| v.shape() != shape.as_slice()) {
        return Err(ValidError::Invalid("volumes must share one [C, X, Y, Z] shape".into()));
    }
    let (c, ext) = (shape[0], [shape[1], shape[2], shape[3]]);
    if (0..3).any(|d| patch[d] == 0 || patch[d] > ext[d]) {
        return Err(ValidError::PatchTooLarge { patch, extent: ext });
    }
    let dim = c * patch.iter().product::<usize>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_patches * dim);
    let mut buf = vec![0.0; dim];
    for _ in 0..n_patches {
        let v = &volumes[rng.random_range(0..volumes.len())];
        let o: [usize; 3] = std::array::from_fn(|d| rng.random_range(0..=ext[d] - patch[d]));
        let mut w = 0;
        for ch in 0..c {
            for x in 0..patch[0] {
                for y in 0..patch[1] {
                    let start = ((ch * ext[0] + o[0] + x) * ext[1] + o[1] + y) * ext[2] + o[2];
                    buf[w..w + patch[2]].copy_from_slice(&v.data()[start..start + patch[2]]);
                    w += patch[2];
                }
            }
        }
        if standardize(&mut buf, c) {
            data.extend_from_slice(&buf);
        }
    }
    PatchSet::from_rows(dim, data, patch, level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_rows() {
        let v = Tensor::from_fn(vec![2, 6, 5, 4], |i| ((i * 7919) % 101) as f64);
        let p = extract_patches(&[v], 0, [3, 3, 2], 50, 1).unwrap();
        assert_eq!(p.len(), 50);
        for i in 0..p.len() {
            for block in p.row(i).chunks_exact(18) {
                let m = block.iter().sum::<f64>() / 18.0;
                let var = block.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 18.0;
                assert!(m.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_patches_are_dropped() {
        let p = extract_patches(&[Tensor::full(vec![1, 4, 4, 4], 1.0)], 0, [2, 2, 2], 10, 0).unwrap();
        assert!(p.is_empty());
        let p = extract_patches(&[Tensor::zeros(vec![1, 4, 4, 4])], 0, [2, 2, 2], 0, 0).unwrap();
        assert!(p.is_empty());
    }
}
