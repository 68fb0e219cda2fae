use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSpec {
    pub dim: usize,
    pub spatial: [usize; 3],
}

impl Default for LatentSpec {
    fn default() -> Self {
        Self { dim: 100, spatial: [4, 4, 4] }
    }
}

impl LatentSpec {
    pub fn validate(&self, target: [usize; 3]) -> Result<()> {
        if self.dim == 0 || self.spatial.iter().any(|&s| s == 0) {
            return config(format!("latent {:?} must have positive extents", self));
        }
        for d in 0..3 {
            let (l, t) = (self.spatial[d], target[d]);
            if t % l != 0 || !(t / l).is_power_of_two() {
                return config(format!("axis {d}: target {t} / latent {l} is not a power of two"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthPolicy {
    EarlyStop,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub leaky_g: bool,
    pub logits_loss: bool,
    pub tuned_betas: bool,
    pub spectral_norm: bool,
    pub residual_blocks: bool,
    pub bottleneck_blocks: bool,
    pub no_batch_in_d: bool,
    pub r1: bool,
    pub double_blocks: bool,
    pub orthogonal_init: bool,
    pub latent_skip: bool,
    pub lr_g: f64,
    pub lr_d: f64,
    pub d_steps_per_g: usize,
    pub base_channels: usize,
    pub growth_policy: GrowthPolicy,
    pub target_shape: [usize; 3],
    pub channels_out: usize,
    pub kernel_base: usize,
    pub leaky_slope: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            leaky_g: false,
            logits_loss: false,
            tuned_betas: false,
            spectral_norm: false,
            residual_blocks: false,
            bottleneck_blocks: false,
            no_batch_in_d: false,
            r1: false,
            double_blocks: false,
            orthogonal_init: false,
            latent_skip: false,
            lr_g: 2e-4,
            lr_d: 2e-4,
            d_steps_per_g: 1,
            base_channels: 32,
            growth_policy: GrowthPolicy::EarlyStop,
            target_shape: [128, 128, 16],
            channels_out: 2,
            kernel_base: 4,
            leaky_slope: 0.2,
        }
    }
}

pub const PRESETS: [&str; 9] = ["arch0", "arch1", "arch2", "arch3", "arch4", "arch5", "arch6", "arch7", "arch8"];

impl ArchitectureConfig {
    /// Adam `(beta1, beta2)`.
    pub fn betas(&self) -> (f64, f64) {
        if self.tuned_betas {
            (0.0, 0.99)
        } else {
            (0.5, 0.999)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_steps_per_g == 0 {
            return config("d_steps_per_g must be at least 1");
        }
        if self.base_channels == 0 || !(1..=2).contains(&self.channels_out) {
            return config("base_channels must be positive and channels_out 1 or 2");
        }
        if self.kernel_base < 2 || self.kernel_base % 2 != 0 {
            return config("kernel_base must be even and at least 2 for exact doubling");
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return config("learning rates must be positive");
        }
        if self.bottleneck_blocks && !self.residual_blocks {
            return config("bottleneck_blocks requires residual_blocks");
        }
        Ok(())
    }
}

/// Ablation-ladder presets; each rung adds to the previous one.
pub fn resolve_preset(name: &str) -> Result<ArchitectureConfig> {
    let rung: usize = match PRESETS.iter().position(|&p| p == name) {
        Some(i) => i,
        None => return config(format!("unknown preset {name:?}; expected one of {PRESETS:?}")),
    };
    let mut c = ArchitectureConfig::default();
    if rung >= 1 {
        c.leaky_g = true;
        c.logits_loss = true;
        c.tuned_betas = true;
    }
    if rung >= 2 {
        c.spectral_norm = true;
    }
    if rung >= 3 {
        c.residual_blocks = true;
        c.bottleneck_blocks = true;
        c.no_batch_in_d = true;
    }
    if rung >= 4 {
        c.r1 = true;
    }
    if rung >= 5 {
        c.lr_g = 5e-5;
        c.d_steps_per_g = 2;
    }
    if rung >= 6 {
        c.double_blocks = true;
    }
    if rung >= 7 {
        c.orthogonal_init = true;
    }
    if rung >= 8 {
        c.latent_skip = true;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_and_rungs() {
        let a0 = resolve_preset("arch0").unwrap();
        assert_eq!(a0, ArchitectureConfig::default());
        assert_eq!((a0.lr_g, a0.lr_d, a0.betas()), (2e-4, 2e-4, (0.5, 0.999)));
        assert_eq!(resolve_preset("arch1").unwrap().betas(), (0.0, 0.99));
        let a4 = resolve_preset("arch4").unwrap();
        assert!(a4.residual_blocks && a4.spectral_norm && a4.r1 && a4.logits_loss);
        let a8 = resolve_preset("arch8").unwrap();
        assert!(a8.double_blocks && a8.orthogonal_init && a8.latent_skip);
        assert_eq!((a8.lr_g, a8.d_steps_per_g), (5e-5, 2));
        assert!(resolve_preset("arch9").is_err());
    }

    #[test]
    fn presets_parse_back_from_json() {
        for p in PRESETS {
            let c = resolve_preset(p).unwrap();
            let s = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<ArchitectureConfig>(&s).unwrap(), c);
        }
        assert!(serde_json::from_str::<ArchitectureConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
