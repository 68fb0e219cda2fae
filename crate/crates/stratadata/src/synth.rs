//! Procedural fluvial stratigraphy: a meandering channel belt running along
//! y whose centerline drifts laterally from layer to layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::volume::{Channel, VoxelVolume, COARSE, TIME};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub dims: [usize; 3],
    pub cell_size: [f32; 3],
    /// Deposited layers counted from the bottom; cells above are empty.
    pub n_layers: usize,
    pub channel_width_cells: f64,
    pub meander_amplitude: f64,
    pub meander_wavelength_cells: f64,
    /// Standard deviation of the per-layer lateral centerline shift, in cells.
    pub drift_rate: f64,
    pub coarse_in_channel: f64,
    pub coarse_falloff: f64,
    pub overbank_coarse: f64,
    /// Years between consecutive layers.
    pub layer_years: f64,
    /// Columns lose up to this many top layers (0 keeps a flat top).
    pub empty_top_max: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            dims: [32, 40, 10],
            cell_size: [50.0, 50.0, 0.5],
            n_layers: 10,
            channel_width_cells: 3.0,
            meander_amplitude: 4.0,
            meander_wavelength_cells: 24.0,
            drift_rate: 1.5,
            coarse_in_channel: 0.95,
            coarse_falloff: 1.0,
            overbank_coarse: 0.08,
            layer_years: 50.0,
            empty_top_max: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::Invalid(m));
        if self.dims.iter().any(|&d| d == 0) {
            return bad(format!("dims {:?} must be positive", self.dims));
        }
        if self.n_layers == 0 || self.n_layers > self.dims[2] {
            return bad(format!("n_layers {} must be in 1..={}", self.n_layers, self.dims[2]));
        }
        if self.empty_top_max >= self.n_layers {
            return bad(format!("empty_top_max {} must leave the bottom layer filled", self.empty_top_max));
        }
        if !(self.channel_width_cells > 0.0 && self.meander_wavelength_cells > 0.0 && self.layer_years > 0.0) {
            return bad("width, wavelength and layer_years must be positive".into());
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.coarse_in_channel) || !unit(self.overbank_coarse) || self.coarse_falloff < 0.0 {
            return bad("coarse fractions must lie in [0, 1] and the falloff be non-negative".into());
        }
        if self.meander_amplitude < 0.0 || self.drift_rate < 0.0 || self.cell_size.iter().any(|&c| !(c > 0.0)) {
            return bad("amplitude, drift and cell sizes must be non-negative / positive".into());
        }
        Ok(())
    }
}

/// RNG for stream `stream` of run `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn synth_generate(seed: u64, p: &SynthParams) -> Result<VoxelVolume> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [nx, ny, nz] = p.dims;
    let n = nx * ny * nz;
    let mut coarse = vec![None; n];
    let mut time = vec![None; n];

    let tops: Vec<usize> = (0..nx * ny)
        .map(|_| if p.empty_top_max == 0 { 0 } else { rng.random_range(0..=p.empty_top_max) })
        .collect();
    let (lo, hi) = (nx as f64 * 0.3, nx as f64 * 0.7);
    let mut center = rng.random_range(lo..=hi.max(lo));
    let mut phase = rng.random_range(0.0..std::f64::consts::TAU);
    let k = std::f64::consts::TAU / p.meander_wavelength_cells;

    for z in 0..p.n_layers {
        if z > 0 {
            let step: f64 = StandardNormal.sample(&mut rng);
            center += p.drift_rate * step;
            // Reflect to keep the belt inside the grid.
            let (a, b) = (0.0, (nx - 1) as f64);
            if center < a {
                center = 2.0 * a - center;
            }
            if center > b {
                center = 2.0 * b - center;
            }
            center = center.clamp(a, b);
            phase += rng.random_range(-0.3..0.3);
        }
        let base_time = (z + 1) as f64 * p.layer_years;
        for y in 0..ny {
            let cx = center + p.meander_amplitude * (k * y as f64 + phase).sin();
            for x in 0..nx {
                if z >= p.n_layers - tops[x + nx * y] {
                    continue;
                }
                let i = x + nx * (y + ny * z);
                let d = (x as f64 - cx) / p.channel_width_cells;
                let belt = p.coarse_in_channel * (-(d * d) * p.coarse_falloff).exp();
                let overbank = p.overbank_coarse * rng.random_range(0.5..1.5);
                coarse[i] = Some((belt + overbank).clamp(0.0, 1.0) as f32);
                let jitter = rng.random_range(-0.45..0.45) * p.layer_years;
                time[i] = Some((base_time + jitter) as f32);
            }
        }
    }
    VoxelVolume::new(
        p.dims,
        p.cell_size,
        vec![Channel { name: COARSE.into(), values: coarse }, Channel { name: TIME.into(), values: time }],
    )
}
