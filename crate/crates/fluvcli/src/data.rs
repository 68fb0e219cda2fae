//! Training, validation and test sets from the configured data source.

use geovalid::Facies;
use gradcore::Tensor;
use stratadata::{
    crop_sample, crop_vertical, directory_samples, extremity_offsets, fill_above_topography, load_volume, make_split,
    realization_seed, scale_sample, synth_generate, synth_samples, CropConstraint, CropMode, Sample, SplitPlan, VoxelVolume,
};

use crate::config::{DataConfig, DataSource};
use crate::error::Result;

pub struct Datasets {
    pub plan: SplitPlan,
    pub train: Vec<Tensor<f64>>,
    pub validation: Vec<Tensor<f64>>,
    pub test: Vec<Tensor<f64>>,
}

pub fn realization_count(cfg: &DataConfig) -> Result<usize> {
    Ok(match &cfg.source {
        DataSource::Synth { count, .. } => *count,
        DataSource::Directory { path } => stratadata::dataset::list_volumes(path)?.len(),
    })
}

/// Coarse-fraction channel replaced by the scaled Folk class of each cell.
pub fn to_facies(sample: &mut Sample) {
    let n: usize = sample.tensor.shape()[1..].iter().product();
    for v in &mut sample.tensor.data_mut()[..n] {
        *v = Facies::classify(((*v + 1.0) / 2.0).clamp(0.0, 1.0)).scaled();
    }
}

/// Preprocessed samples of realizations `ids`, one random crop each.
pub fn samples(cfg: &DataConfig, ids: &[u64]) -> Result<Vec<Sample>> {
    let mut out = match &cfg.source {
        DataSource::Synth { params, .. } => synth_samples(cfg.seed, ids, params, &cfg.pipeline)?,
        DataSource::Directory { path } => directory_samples(path, cfg.seed, ids, &cfg.pipeline)?,
    };
    if cfg.facies {
        out.iter_mut().for_each(to_facies);
    }
    Ok(out)
}

fn tensors(s: Vec<Sample>) -> Vec<Tensor<f64>> {
    s.into_iter().map(|s| s.tensor).collect()
}

pub fn load(cfg: &DataConfig) -> Result<Datasets> {
    let n = realization_count(cfg)?;
    let sp = &cfg.split;
    let plan = make_split(n, sp.n_train, sp.n_val, sp.n_test, sp.mode, cfg.seed)?;
    Ok(Datasets {
        train: tensors(samples(cfg, &plan.train)?),
        validation: tensors(samples(cfg, &plan.validation)?),
        test: tensors(samples(cfg, &plan.test)?),
        plan,
    })
}

fn volume(cfg: &DataConfig, id: u64) -> Result<VoxelVolume> {
    Ok(match &cfg.source {
        DataSource::Synth { params, .. } => synth_generate(realization_seed(cfg.seed, id), params)?,
        DataSource::Directory { path } => {
            let paths = stratadata::dataset::list_volumes(path)?;
            let p = paths.get((id as usize).wrapping_sub(1)).ok_or_else(|| {
                crate::error::CliError::Data(format!("realization {id} not among {} files", paths.len()))
            })?;
            load_volume(p)?
        }
    })
}

/// Two crops per realization, at the minimal and maximal y offsets.
pub fn extremity_samples(cfg: &DataConfig, ids: &[u64]) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(2 * ids.len());
    for &id in ids {
        let v = volume(cfg, id)?;
        let v = match cfg.pipeline.vertical_window {
            Some((lo, hi)) => crop_vertical(&v, lo, hi)?,
            None => v,
        };
        let v = fill_above_topography(&v)?;
        for off in extremity_offsets(v.dims, cfg.pipeline.sample_size)? {
            let (crop, off) = crop_sample::<rand_chacha::ChaCha8Rng>(&v, cfg.pipeline.sample_size, CropMode::Fixed(off), CropConstraint::None)?;
            let mut s = scale_sample(&crop, cfg.pipeline.channels, id, off)?;
            if cfg.facies {
                to_facies(&mut s);
            }
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SplitSpec;

    fn tiny() -> DataConfig {
        let mut c = DataConfig::default();
        c.source = DataSource::Synth { params: Default::default(), count: 6 };
        c.split = SplitSpec { n_train: 3, n_val: 2, n_test: 1, ..Default::default() };
        c
    }

    #[test]
    fn split_sizes_and_determinism() {
        let a = load(&tiny()).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (3, 2, 1));
        assert_eq!(a.plan.validation, vec![4, 5]);
        let b = load(&tiny()).unwrap();
        assert_eq!(a.train, b.train);
    }

    #[test]
    fn facies_values_are_three_classes() {
        let mut c = tiny();
        c.facies = true;
        c.pipeline.channels = stratadata::ChannelSet::Coarse;
        let d = load(&c).unwrap();
        let mut seen = [false; 3];
        for t in &d.train {
            assert_eq!(t.shape()[0], 1);
            for &v in t.data() {
                let k = [-1.0, 0.0, 1.0].iter().position(|&c| c == v).expect("class value");
                seen[k] = true;
            }
        }
        assert!(seen[0] && seen[2]);
    }

    #[test]
    fn extremity_crops_sit_at_both_ends() {
        let c = tiny();
        let s = extremity_samples(&c, &[1, 2]).unwrap();
        assert_eq!(s.len(), 4);
        let ny = 40 - c.pipeline.sample_size[1];
        assert_eq!(s[0].provenance.offsets[1], 0);
        assert_eq!(s[1].provenance.offsets[1], ny);
    }
}
