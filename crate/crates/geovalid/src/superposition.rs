use gradcore::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ValidError};

/// Fraction of vertically adjacent cell pairs whose upper cell is not older
/// than the lower one. `time` is `[X, Y, Z]` with z = 0 at the bottom; ties
/// count as honoring.
pub fn superposition_fraction(time: &Tensor<f64>) -> Result<f64> {
    let s = time.shape();
    if s.len() != 3 {
        return Err(ValidError::Invalid(format!("time volume must be [X, Y, Z], got {s:?}")));
    }
    let nz = s[2];
    if nz < 2 {
        return Err(ValidError::Invalid(format!("need at least 2 layers, got {nz}")));
    }
    let honoring: usize = time
        .data()
        .chunks_exact(nz)
        .map(|col| col.windows(2).filter(|w| w[1] >= w[0]).count())
        .sum();
    Ok(honoring as f64 / (s[0] * s[1] * (nz - 1)) as f64)
}

/// Superposition fraction of the time channel (index 1) of a `[C, X, Y, Z]`
/// sample; `None` when the sample has no time channel.
pub fn sample_superposition(sample: &Tensor<f64>) -> Result<Option<f64>> {
    let s = sample.shape();
    if s.len() != 4 {
        return Err(ValidError::Invalid(format!("sample must be [C, X, Y, Z], got {s:?}")));
    }
    if s[0] < 2 {
        return Ok(None);
    }
    superposition_fraction(&sample.select(1)).map(Some)
}

/// Distribution summary of per-sample superposition fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsSummary {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
    pub above_0_9: f64,
    pub above_0_99: f64,
}

impl FsSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let frac = |t: f64| v.iter().filter(|&&x| x > t).count() as f64 / n as f64;
        Some(Self {
            count: n,
            min: v[0],
            median: median_sorted(&v),
            mean: v.iter().sum::<f64>() / n as f64,
            max: v[n - 1],
            above_0_9: frac(0.9),
            above_0_99: frac(0.99),
        })
    }
}

pub fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
