//! Three-class facies from the coarse fraction.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ValidError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Facies {
    Clay,
    SandyClay,
    ClayeySandSand,
}

impl Facies {
    /// Coarse-fraction boundaries: sand:mud ratios 1:9 and 1:1.
    pub const CUTOFFS: [f64; 2] = [0.1, 0.5];

    pub fn classify(f: f64) -> Self {
        if f < Self::CUTOFFS[0] {
            Self::Clay
        } else if f < Self::CUTOFFS[1] {
            Self::SandyClay
        } else {
            Self::ClayeySandSand
        }
    }

    /// Network value of the class in `[-1, 1]`.
    pub fn scaled(self) -> f64 {
        match self {
            Self::Clay => -1.0,
            Self::SandyClay => 0.0,
            Self::ClayeySandSand => 1.0,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrainMixing {
    /// Arithmetic mean of diameters.
    #[default]
    Linear,
    /// Arithmetic mean on the phi (log2) scale.
    Phi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaciesVolume {
    pub classes: Vec<Facies>,
    /// Mean grain size in millimeters.
    pub mean_grain_mm: Vec<f64>,
}

pub fn folk_facies(coarse_fraction: &[f64], d_coarse: f64, d_fine: f64, mixing: GrainMixing) -> Result<FaciesVolume> {
    if !(0.0 < d_fine && d_fine < d_coarse) {
        return Err(ValidError::Invalid(format!("need 0 < d_fine < d_coarse, got {d_fine}, {d_coarse}")));
    }
    if let Some(bad) = coarse_fraction.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(ValidError::Invalid(format!("coarse fraction {bad} outside [0, 1]")));
    }
    let mean_grain_mm = coarse_fraction
        .iter()
        .map(|&f| match mixing {
            GrainMixing::Linear => f * d_coarse + (1.0 - f) * d_fine,
            GrainMixing::Phi => (f * d_coarse.log2() + (1.0 - f) * d_fine.log2()).exp2(),
        })
        .collect();
    Ok(FaciesVolume { classes: coarse_fraction.iter().map(|&f| Facies::classify(f)).collect(), mean_grain_mm })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_and_mixed() {
        let v = folk_facies(&[0.0, 1.0, 0.3], 0.5, 0.002, GrainMixing::Linear).unwrap();
        assert_eq!(v.classes, vec![Facies::Clay, Facies::ClayeySandSand, Facies::SandyClay]);
        assert!((v.mean_grain_mm[2] - (0.3 * 0.5 + 0.7 * 0.002)).abs() < 1e-15);
        let p = folk_facies(&[0.5], 4.0, 1.0, GrainMixing::Phi).unwrap();
        assert!((p.mean_grain_mm[0] - 2.0).abs() < 1e-12);
        assert!(folk_facies(&[1.2], 0.5, 0.002, GrainMixing::Linear).is_err());
        assert!(folk_facies(&[0.2], 0.002, 0.5, GrainMixing::Linear).is_err());
    }
}
