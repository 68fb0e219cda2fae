//! Anisotropic Laplacian pyramid over `[C, X, Y, Z]` volumes.

use gradcore::Tensor;

use crate::error::{Result, ValidError};

/// Extents of successive pyramid levels. Axis `d` is halved while its
/// extent is even and half of it still spans at least two patches.
pub fn level_extents(extent: [usize; 3], patch: [usize; 3], max_levels: usize) -> Result<Vec<[usize; 3]>> {
    if (0..3).any(|d| patch[d] == 0 || patch[d] > extent[d]) {
        return Err(ValidError::PatchTooLarge { patch, extent });
    }
    if max_levels == 0 {
        return Err(ValidError::Invalid("max_levels must be at least 1".into()));
    }
    let mut levels = vec![extent];
    while levels.len() < max_levels {
        let cur = *levels.last().unwrap();
        let next: [usize; 3] = std::array::from_fn(|d| if halves(cur[d], patch[d]) { cur[d] / 2 } else { cur[d] });
        if next == cur {
            break;
        }
        levels.push(next);
    }
    Ok(levels)
}

fn halves(extent: usize, patch: usize) -> bool {
    extent % 2 == 0 && extent / 2 >= 2 * patch
}

/// Band-pass details followed by the low-pass residual (last entry). Entry
/// `k` has the extents of level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<Tensor<f64>>,
}

fn spatial(t: &Tensor<f64>) -> [usize; 3] {
    let s = t.shape();
    [s[1], s[2], s[3]]
}

/// `[1, 2, 1] / 4` blur with clamped edges along `axis`, then decimation by 2.
fn down_axis(t: &Tensor<f64>, axis: usize) -> Tensor<f64> {
    let s = t.shape().to_vec();
    let n = s[axis + 1];
    let inner: usize = s[axis + 2..].iter().product();
    let outer: usize = s[..axis + 1].iter().product();
    let mut out_shape = s.clone();
    out_shape[axis + 1] = n / 2;
    let src = t.data();
    let mut out = vec![0.0; outer * (n / 2) * inner];
    for o in 0..outer {
        for i in 0..n / 2 {
            let c = 2 * i;
            let (l, r) = (c.saturating_sub(1), (c + 1).min(n - 1));
            for k in 0..inner {
                let at = |j: usize| src[(o * n + j) * inner + k];
                out[(o * (n / 2) + i) * inner + k] = 0.5 * (at(c) + 0.5 * (at(l) + at(r)));
            }
        }
    }
    Tensor::new(out_shape, out).expect("sized")
}

/// Zero insertion followed by the same filter with gain 2, i.e. linear
/// interpolation, with the edge clamped.
fn up_axis(t: &Tensor<f64>, axis: usize) -> Tensor<f64> {
    let s = t.shape().to_vec();
    let n = s[axis + 1];
    let inner: usize = s[axis + 2..].iter().product();
    let outer: usize = s[..axis + 1].iter().product();
    let mut out_shape = s.clone();
    out_shape[axis + 1] = 2 * n;
    let src = t.data();
    let mut out = vec![0.0; outer * 2 * n * inner];
    for o in 0..outer {
        for i in 0..n {
            let nxt = (i + 1).min(n - 1);
            for k in 0..inner {
                let a = src[(o * n + i) * inner + k];
                let b = src[(o * n + nxt) * inner + k];
                out[(o * 2 * n + 2 * i) * inner + k] = a;
                out[(o * 2 * n + 2 * i + 1) * inner + k] = 0.5 * (a + b);
            }
        }
    }
    Tensor::new(out_shape, out).expect("sized")
}

fn resample(t: &Tensor<f64>, from: [usize; 3], to: [usize; 3]) -> Tensor<f64> {
    let mut cur = t.clone();
    for d in 0..3 {
        if to[d] < from[d] {
            cur = down_axis(&cur, d);
        } else if to[d] > from[d] {
            cur = up_axis(&cur, d);
        }
    }
    cur
}

pub fn laplacian_pyramid(volume: &Tensor<f64>, patch: [usize; 3], max_levels: usize) -> Result<Pyramid> {
    if volume.ndim() != 4 {
        return Err(ValidError::Invalid(format!("volume must be [C, X, Y, Z], got {:?}", volume.shape())));
    }
    let extents = level_extents(spatial(volume), patch, max_levels)?;
    let mut levels = Vec::with_capacity(extents.len());
    let mut cur = volume.clone();
    for k in 0..extents.len() - 1 {
        let low = resample(&cur, extents[k], extents[k + 1]);
        let up = resample(&low, extents[k + 1], extents[k]);
        levels.push(cur.zip_map(&up, |a, b| a - b));
        cur = low;
    }
    levels.push(cur);
    Ok(Pyramid { levels })
}

impl Pyramid {
    /// Sum of all levels upsampled to full resolution.
    pub fn reconstruct(&self) -> Tensor<f64> {
        let mut acc = self.levels.last().unwrap().clone();
        for detail in self.levels[..self.levels.len() - 1].iter().rev() {
            let up = resample(&acc, spatial(&acc), spatial(detail));
            acc = up.zip_map(detail, |a, b| a + b);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_halving_rule() {
        let l = level_extents([128, 128, 16], [7, 7, 3], 3).unwrap();
        assert_eq!(l, vec![[128, 128, 16], [64, 64, 8], [32, 32, 8]]);
        let l = level_extents([32, 32, 8], [7, 7, 3], 5).unwrap();
        assert_eq!(l, vec![[32, 32, 8], [16, 16, 8]]);
        assert!(level_extents([4, 4, 4], [7, 7, 3], 3).is_err());
    }

    #[test]
    fn constant_volume_has_zero_details() {
        let v = Tensor::full(vec![2, 32, 32, 8], 0.7);
        let p = laplacian_pyramid(&v, [3, 3, 1], 6).unwrap();
        assert_eq!(p.levels.len(), 3);
        assert_eq!(p.levels[2].shape(), &[2, 8, 8, 2]);
        for d in &p.levels[..2] {
            assert!(d.data().iter().all(|&x| x == 0.0));
        }
        assert!(p.levels[2].data().iter().all(|&x| (x - 0.7).abs() < 1e-15));
    }
}
