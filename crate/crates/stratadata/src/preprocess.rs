//! Crop, fill and scale steps turning a raw volume into a network sample.

use gradcore::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::volume::{Channel, VoxelVolume, COARSE, TIME};

/// Keeps layers whose base elevation (measured from the grid base) lies in
/// `[z_min_m, z_max_m)`.
pub fn crop_vertical(volume: &VoxelVolume, z_min_m: f64, z_max_m: f64) -> Result<VoxelVolume> {
    if !(z_min_m < z_max_m) {
        return Err(DataError::Window(format!("[{z_min_m}, {z_max_m}) is empty")));
    }
    let dz = volume.cell_size[2] as f64;
    let to_layer = |m: f64| -> Result<usize> {
        let k = m / dz;
        if m < 0.0 || (k - k.round()).abs() > 1e-6 {
            return Err(DataError::Window(format!("{m} m is not a non-negative multiple of dz = {dz}")));
        }
        Ok(k.round() as usize)
    };
    let (k0, k1) = (to_layer(z_min_m)?, to_layer(z_max_m)?);
    if k1 > volume.dims[2] {
        return Err(DataError::Window(format!("[{z_min_m}, {z_max_m}) exceeds {} layers", volume.dims[2])));
    }
    let [nx, ny, _] = volume.dims;
    crop_box(volume, [0, 0, k0], [nx, ny, k1 - k0])
}

fn crop_box(volume: &VoxelVolume, off: [usize; 3], size: [usize; 3]) -> Result<VoxelVolume> {
    let channels = volume
        .channels
        .iter()
        .map(|ch| {
            let mut values = Vec::with_capacity(size.iter().product());
            for z in 0..size[2] {
                for y in 0..size[1] {
                    let start = volume.index(off[0], off[1] + y, off[2] + z);
                    values.extend_from_slice(&ch.values[start..start + size[0]]);
                }
            }
            Channel { name: ch.name.clone(), values }
        })
        .collect();
    VoxelVolume::new(size, volume.cell_size, channels)
}

/// Fills empty cells above the topography: coarse fraction 0, deposition
/// time one year after the highest deposited cell of the column. Every
/// filled cell of a column receives that same time.
pub fn fill_above_topography(volume: &VoxelVolume) -> Result<VoxelVolume> {
    let mut out = volume.clone();
    let [nx, ny, nz] = volume.dims;
    for y in 0..ny {
        for x in 0..nx {
            let k = volume.empty_top(x, y);
            if k == 0 {
                continue;
            }
            if k == nz {
                return Err(DataError::EmptyColumn(x, y));
            }
            let top = volume.index(x, y, nz - k - 1);
            for ch in out.channels.iter_mut() {
                let fill = match ch.name.as_str() {
                    TIME => ch.values[top].map(|t| t + 1.0),
                    _ => Some(0.0),
                };
                for z in nz - k..nz {
                    ch.values[x + nx * (y + ny * z)] = fill;
                }
            }
        }
    }
    if out.has_empty_cells() {
        return Err(DataError::Invalid("empty cells remain below the topography".into()));
    }
    Ok(out)
}

#[derive(Debug)]
pub enum CropMode<'a, R: Rng + ?Sized> {
    Random(&'a mut R),
    Fixed([usize; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CropConstraint {
    None,
    /// The crop's maximum coarse fraction must reach `threshold`.
    MustContainChannel { threshold: f32, max_draws: usize },
}

impl CropConstraint {
    pub fn channel() -> Self {
        Self::MustContainChannel { threshold: 0.5, max_draws: 100 }
    }
}

/// Axis-aligned crop of `size` cells. Returns the crop and its offsets.
pub fn crop_sample<R: Rng + ?Sized>(
    volume: &VoxelVolume,
    size: [usize; 3],
    mode: CropMode<'_, R>,
    constraint: CropConstraint,
) -> Result<(VoxelVolume, [usize; 3])> {
    if (0..3).any(|d| size[d] == 0 || size[d] > volume.dims[d]) {
        return Err(DataError::CropTooLarge { size, dims: volume.dims });
    }
    let accept = |v: &VoxelVolume| match constraint {
        CropConstraint::None => true,
        CropConstraint::MustContainChannel { threshold, .. } => {
            v.coarse().iter().flatten().any(|&c| c >= threshold)
        }
    };
    let draws = match constraint {
        CropConstraint::None => 1,
        CropConstraint::MustContainChannel { max_draws, .. } => max_draws.max(1),
    };
    match mode {
        CropMode::Fixed(off) => {
            if (0..3).any(|d| off[d] + size[d] > volume.dims[d]) {
                return Err(DataError::Window(format!("offset {off:?} + size {size:?} exceeds {:?}", volume.dims)));
            }
            let v = crop_box(volume, off, size)?;
            if accept(&v) {
                Ok((v, off))
            } else {
                Err(DataError::RetryCapExceeded(1))
            }
        }
        CropMode::Random(rng) => {
            for _ in 0..draws {
                let off: [usize; 3] = std::array::from_fn(|d| rng.random_range(0..=volume.dims[d] - size[d]));
                let v = crop_box(volume, off, size)?;
                if accept(&v) {
                    return Ok((v, off));
                }
            }
            Err(DataError::RetryCapExceeded(draws))
        }
    }
}

/// Offsets of the two crops at the minimal and maximal y positions, centered
/// in x and at the bottom in z.
pub fn extremity_offsets(dims: [usize; 3], size: [usize; 3]) -> Result<[[usize; 3]; 2]> {
    if (0..3).any(|d| size[d] == 0 || size[d] > dims[d]) {
        return Err(DataError::CropTooLarge { size, dims });
    }
    let x = (dims[0] - size[0]) / 2;
    Ok([[x, 0, 0], [x, dims[1] - size[1], 0]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelSet {
    Coarse,
    CoarseAndTime,
}

impl ChannelSet {
    pub fn count(self) -> usize {
        match self {
            Self::Coarse => 1,
            Self::CoarseAndTime => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub realization: u64,
    pub offsets: [usize; 3],
    /// Time extremes used for scaling; `None` for generated samples.
    pub time_range: Option<(f64, f64)>,
    pub cell_size: [f32; 3],
}

/// A preprocessed network sample `[C, X, Y, Z]` with values in `[-1, 1]`.
/// Channel 0 is the coarse fraction, channel 1 (when present) the
/// deposition time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tensor: Tensor<f64>,
    pub provenance: Provenance,
}

/// Reorders a volume channel (x fastest) into `[X, Y, Z]` (z fastest).
fn to_xyz(v: &VoxelVolume, values: &[Option<f32>], out: &mut [f64], map: impl Fn(f64) -> f64) -> Result<()> {
    let [nx, ny, nz] = v.dims;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let val = values[v.index(x, y, z)]
                    .ok_or_else(|| DataError::Invalid(format!("empty cell at ({x}, {y}, {z}); fill first")))?;
                out[(x * ny + y) * nz + z] = map(val as f64);
            }
        }
    }
    Ok(())
}

/// Coarse fraction `f -> 2f - 1`; time `t -> 2 (t - t_min) / (t_max - t_min) - 1`
/// with the extremes taken over the given volume.
pub fn scale_sample(volume: &VoxelVolume, channels: ChannelSet, realization: u64, offsets: [usize; 3]) -> Result<Sample> {
    let [nx, ny, nz] = volume.dims;
    let n = nx * ny * nz;
    let mut data = vec![0.0; channels.count() * n];
    to_xyz(volume, volume.coarse(), &mut data[..n], |f| 2.0 * f - 1.0)?;
    let mut time_range = None;
    if channels == ChannelSet::CoarseAndTime {
        let t = volume.time().ok_or_else(|| DataError::Invalid(format!("missing {TIME} channel")))?;
        let (lo, hi) = t.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
        if !(hi > lo) {
            return Err(DataError::DegenerateTimeRange(lo, hi));
        }
        to_xyz(volume, t, &mut data[n..], |v| (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))?;
        time_range = Some((lo, hi));
    }
    let tensor = Tensor::new(vec![channels.count(), nx, ny, nz], data).expect("sized above");
    Ok(Sample { tensor, provenance: Provenance { realization, offsets, time_range, cell_size: volume.cell_size } })
}

/// Inverse of [`scale_sample`]. Without a recorded time range the time
/// channel is returned as relative age in `[0, 1]`.
pub fn unscale_sample(sample: &Sample) -> Result<VoxelVolume> {
    let s = sample.tensor.shape();
    if s.len() != 4 || !(1..=2).contains(&s[0]) {
        return Err(DataError::Invalid(format!("sample shape {s:?} is not [1|2, X, Y, Z]")));
    }
    let [nx, ny, nz] = [s[1], s[2], s[3]];
    let n = nx * ny * nz;
    let gather = |c: usize, map: &dyn Fn(f64) -> f64| -> Vec<Option<f32>> {
        let src = &sample.tensor.data()[c * n..(c + 1) * n];
        let mut out = vec![None; n];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    out[x + nx * (y + ny * z)] = Some(map(src[(x * ny + y) * nz + z]) as f32);
                }
            }
        }
        out
    };
    let mut channels = vec![Channel { name: COARSE.into(), values: gather(0, &|s| ((s + 1.0) / 2.0).clamp(0.0, 1.0)) }];
    if s[0] == 2 {
        let values = match sample.provenance.time_range {
            Some((lo, hi)) => gather(1, &|s| (s + 1.0) / 2.0 * (hi - lo) + lo),
            None => gather(1, &|s| ((s + 1.0) / 2.0).clamp(0.0, 1.0)),
        };
        channels.push(Channel { name: TIME.into(), values });
    }
    VoxelVolume::new([nx, ny, nz], sample.provenance.cell_size, channels)
}

/// Unscaled values of one channel of a sample in `[X, Y, Z]` order, without
/// the f32 storage rounding of a volume.
pub fn unscale_values(sample: &Sample, channel: usize) -> Vec<f64> {
    let s = sample.tensor.shape();
    let n: usize = s[1..].iter().product();
    let src = &sample.tensor.data()[channel * n..(channel + 1) * n];
    match (channel, sample.provenance.time_range) {
        (0, _) => src.iter().map(|v| (v + 1.0) / 2.0).collect(),
        (_, Some((lo, hi))) => src.iter().map(|v| (v + 1.0) / 2.0 * (hi - lo) + lo).collect(),
        (_, None) => src.iter().map(|v| (v + 1.0) / 2.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn layered(dims: [usize; 3], empty_top: usize) -> VoxelVolume {
        let [nx, ny, nz] = dims;
        let n = nx * ny * nz;
        let mut coarse = vec![None; n];
        let mut time = vec![None; n];
        for z in 0..nz - empty_top {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    coarse[i] = Some(((x + y) % 5) as f32 / 4.0);
                    time[i] = Some(100.0 + 10.0 * z as f32);
                }
            }
        }
        VoxelVolume::new(
            dims,
            [50.0, 50.0, 0.5],
            vec![Channel { name: COARSE.into(), values: coarse }, Channel { name: TIME.into(), values: time }],
        )
        .unwrap()
    }

    #[test]
    fn vertical_window() {
        let v = layered([2, 3, 32], 0);
        let c = crop_vertical(&v, 4.0, 14.0).unwrap();
        assert_eq!(c.dims, [2, 3, 20]);
        assert_eq!(c.time().unwrap()[c.index(0, 0, 0)], Some(180.0));
        assert_eq!(c.time().unwrap()[c.index(0, 0, 19)], Some(370.0));
        assert_eq!(crop_vertical(&v, 0.0, 16.0).unwrap(), v);
        assert_eq!(crop_vertical(&v, 0.0, 0.5).unwrap().dims[2], 1);
        assert!(crop_vertical(&v, 4.0, 17.0).is_err());
        assert!(crop_vertical(&v, 4.2, 14.0).is_err());
    }

    #[test]
    fn fill_uses_one_value_per_column() {
        let v = layered([1, 1, 6], 3);
        let f = fill_above_topography(&v).unwrap();
        let t = f.time().unwrap();
        assert_eq!(&t[3..], &[Some(121.0); 3]);
        assert_eq!(&f.coarse()[3..], &[Some(0.0); 3]);
        assert_eq!(&t[..3], &v.time().unwrap()[..3]);
        let full = layered([2, 2, 4], 0);
        assert_eq!(fill_above_topography(&full).unwrap(), full);
    }

    #[test]
    fn fill_rejects_empty_column() {
        let mut v = layered([2, 1, 3], 0);
        for ch in v.channels.iter_mut() {
            for z in 0..3 {
                ch.values[2 * z] = None;
            }
        }
        assert!(matches!(fill_above_topography(&v), Err(DataError::EmptyColumn(0, 0))));
    }

    #[test]
    fn crop_offsets_cover_the_valid_range() {
        let v = layered([8, 12, 5], 0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut seen_y = std::collections::BTreeSet::new();
        for _ in 0..400 {
            let (_, off) = crop_sample(&v, [8, 8, 4], CropMode::Random(&mut rng), CropConstraint::None).unwrap();
            assert_eq!(off[0], 0);
            assert!(off[1] <= 4 && off[2] <= 1);
            seen_y.insert(off[1]);
        }
        assert_eq!(seen_y.len(), 5);
        let a = crop_sample::<rand_chacha::ChaCha8Rng>(&v, [8, 8, 4], CropMode::Fixed([0; 3]), CropConstraint::None).unwrap();
        let b = crop_sample::<rand_chacha::ChaCha8Rng>(&v, [8, 8, 4], CropMode::Fixed([0; 3]), CropConstraint::None).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            crop_sample(&v, [9, 8, 4], CropMode::Random(&mut rng), CropConstraint::None),
            Err(DataError::CropTooLarge { .. })
        ));
    }

    #[test]
    fn channel_constraint_on_fine_volume_fails() {
        let mut v = layered([4, 4, 4], 0);
        v.channel_mut(COARSE).unwrap().values.iter_mut().for_each(|c| *c = Some(0.1));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let r = crop_sample(&v, [2, 2, 2], CropMode::Random(&mut rng), CropConstraint::channel());
        assert!(matches!(r, Err(DataError::RetryCapExceeded(100))));
    }

    #[test]
    fn scale_maps_coarse_affinely_and_time_to_full_range() {
        let v = layered([3, 2, 4], 0);
        let s = scale_sample(&v, ChannelSet::CoarseAndTime, 7, [0; 3]).unwrap();
        assert_eq!(s.tensor.shape(), &[2, 3, 2, 4]);
        let n = 24;
        let t = &s.tensor.data()[n..];
        assert_eq!(t.iter().cloned().fold(f64::INFINITY, f64::min), -1.0);
        assert_eq!(t.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        // coarse at (x=2, y=0) is 0.5 -> 0
        assert_eq!(s.tensor.data()[(2 * 2) * 4], 0.0);
        let back = unscale_sample(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn degenerate_time_is_rejected() {
        let mut v = layered([2, 2, 2], 0);
        v.channel_mut(TIME).unwrap().values.iter_mut().for_each(|t| *t = Some(5.0));
        assert!(matches!(scale_sample(&v, ChannelSet::CoarseAndTime, 0, [0; 3]), Err(DataError::DegenerateTimeRange(..))));
        assert!(scale_sample(&v, ChannelSet::Coarse, 0, [0; 3]).is_ok());
    }
}
