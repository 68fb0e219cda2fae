use gradcore::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Result, ValidError};
use crate::swd::{SetDescriptor, SwdSettings};

/// Symmetric, non-negative matrix with zero diagonal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(ValidError::LengthMismatch(values.len(), n * n));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(ValidError::Invalid(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !(a >= 0.0) || (a - b).abs() > 1e-12 {
                    return Err(ValidError::Invalid(format!("entry ({i}, {j}) breaks symmetry or sign")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Classical (Torgerson) scaling: top-`k` eigenpairs of
/// `-1/2 J (D o D) J`, negative eigenvalues clamped to zero. Returns `n`
/// rows of `k` centered coordinates.
pub fn classical_mds(d: &DistanceMatrix, k: usize) -> Result<Vec<Vec<f64>>> {
    let n = d.n;
    if k == 0 || n < k + 1 {
        return Err(ValidError::Invalid(format!("need n >= k + 1, got n = {n}, k = {k}")));
    }
    let sq = DMatrix::from_fn(n, n, |i, j| d.get(i, j).powi(2));
    let row_mean: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let all_mean = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + all_mean));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut coords = vec![vec![0.0; k]; n];
    for (c, &e) in order.iter().take(k).enumerate() {
        let scale = eig.eigenvalues[e].max(0.0).sqrt();
        let vec = eig.eigenvectors.column(e);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = (0..n).max_by(|&a, &b| vec[a].abs().total_cmp(&vec[b].abs()).then(b.cmp(&a))).unwrap();
        let sign = if vec[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][c] = sign * vec[i] * scale;
        }
    }
    for c in 0..k {
        let mean = coords.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        coords.iter_mut().for_each(|r| r[c] -= mean);
    }
    Ok(coords)
}

/// Seed for the pair `(i, j)`, symmetric in its arguments.
pub fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    let (a, b) = (i.min(j) as u64, i.max(j) as u64);
    seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
}

/// Pairwise `d_W` between single samples, one seed per unordered pair.
pub fn pairwise_swd(items: &[Tensor<f64>], settings: &SwdSettings) -> Result<DistanceMatrix> {
    let n = items.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dists = pairs
        .par_iter()
        .map(|&(i, j)| {
            let s = SwdSettings { seed: pair_seed(settings.seed, i, j), ..settings.clone() };
            let a = SetDescriptor::new(std::slice::from_ref(&items[i]), &s)?;
            let b = SetDescriptor::new(std::slice::from_ref(&items[j]), &s)?;
            Ok(a.distance(&b, &s)?.mean)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut values = vec![0.0; n * n];
    for (&(i, j), d) in pairs.iter().zip(dists) {
        values[i * n + j] = d;
        values[j * n + i] = d;
    }
    DistanceMatrix::new(n, values)
}
