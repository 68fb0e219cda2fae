use serde::{Deserialize, Serialize};

use crate::config::GrowthPolicy;
use crate::error::{config, Result};

/// Stride and kernel of one growth layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub stride: [usize; 3],
    pub kernel: [usize; 3],
}

impl Step {
    /// Padding giving exact `x stride` growth: 1 on growing axes, 0 elsewhere.
    pub fn pad(&self, kernel_base: usize) -> [usize; 3] {
        std::array::from_fn(|d| if self.stride[d] == 2 { (kernel_base - 2) / 2 } else { 0 })
    }
}

fn log2_ratio(latent: usize, target: usize, axis: usize) -> Result<u32> {
    if latent == 0 || target % latent != 0 || !(target / latent).is_power_of_two() {
        return config(format!("axis {axis}: {target} / {latent} is not a power of two"));
    }
    Ok((target / latent).trailing_zeros())
}

/// Growth layers mapping `latent` extents onto `target`.
pub fn stride_schedule(latent: [usize; 3], target: [usize; 3], policy: GrowthPolicy, kernel_base: usize) -> Result<Vec<Step>> {
    let mut counts = [0u32; 3];
    for d in 0..3 {
        counts[d] = log2_ratio(latent[d], target[d], d)?;
    }
    let layers = *counts.iter().max().unwrap() as usize;
    if policy == GrowthPolicy::Uniform && counts.iter().any(|&c| c != counts[0]) {
        return config(format!("uniform growth needs equal doublings per axis, got {counts:?}"));
    }
    let mut ext = latent;
    let mut steps = Vec::with_capacity(layers);
    for _ in 0..layers {
        let stride: [usize; 3] = std::array::from_fn(|d| if ext[d] < target[d] { 2 } else { 1 });
        let kernel = std::array::from_fn(|d| if stride[d] == 2 { kernel_base } else { 1 });
        for d in 0..3 {
            ext[d] *= stride[d];
        }
        steps.push(Step { stride, kernel });
    }
    Ok(steps)
}

/// Applies the schedule to `latent` extents.
pub fn fold_schedule(latent: [usize; 3], steps: &[Step]) -> [usize; 3] {
    steps.iter().fold(latent, |e, s| std::array::from_fn(|d| e[d] * s.stride[d]))
}

/// Channel width at each resolution level `0..=L` (level `L` is the output
/// resolution): `base * min(2^(L - k), 8)`.
pub fn channel_widths(levels: usize, base: usize) -> Vec<usize> {
    (0..=levels).map(|k| base * (1usize << (levels - k).min(3))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_double_toward_latent_and_cap() {
        assert_eq!(channel_widths(4, 16), vec![128, 128, 64, 32, 16]);
        assert_eq!(channel_widths(5, 32), vec![256, 256, 256, 128, 64, 32]);
        assert_eq!(channel_widths(0, 8), vec![8]);
    }

    #[test]
    fn padding_gives_exact_doubling() {
        let s = Step { stride: [2, 2, 1], kernel: [4, 4, 1] };
        assert_eq!(s.pad(4), [1, 1, 0]);
    }
}
