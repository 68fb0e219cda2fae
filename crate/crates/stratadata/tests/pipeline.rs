use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stratadata::*;

fn honoring_fraction(v: &VoxelVolume) -> f64 {
    let t = v.time().unwrap();
    let [nx, ny, nz] = v.dims;
    let mut ok = 0usize;
    let mut total = 0usize;
    for z in 1..nz {
        for y in 0..ny {
            for x in 0..nx {
                if let (Some(a), Some(b)) = (t[v.index(x, y, z - 1)], t[v.index(x, y, z)]) {
                    total += 1;
                    ok += (b >= a) as usize;
                }
            }
        }
    }
    ok as f64 / total as f64
}

fn random_volume(seed: u64, dims: [usize; 3]) -> VoxelVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [nx, ny, nz] = dims;
    let tops: Vec<usize> = (0..nx * ny).map(|_| rng.random_range(0..nz)).collect();
    let mut coarse = vec![None; nx * ny * nz];
    let mut time = vec![None; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if z + tops[x + nx * y] < nz {
                    let i = x + nx * (y + ny * z);
                    coarse[i] = Some(rng.random::<f32>());
                    time[i] = Some(rng.random_range(0.0..1e4f32));
                }
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
fn file_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume(1, [7, 9, 5]);
    let path = dir.path().join("r.flvd");
    save_volume(&v, &path).unwrap();
    let back = load_volume(&path).unwrap();
    assert_eq!(back, v);
    let again = dir.path().join("s.flvd");
    save_volume(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn header_with_two_channels_and_one_payload_is_truncated() {
    let mut v = random_volume(2, [3, 3, 2]);
    let mut one = Vec::new();
    v.channels.truncate(1);
    write_volume(&v, &mut one).unwrap();
    // Re-declare two channels, appending a second name but no payload.
    let header_len = 4 + 4 + 12 + 12 + 4 + 2 + COARSE.len();
    let mut bytes = one[..header_len].to_vec();
    bytes[32..36].copy_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(&(TIME.len() as u16).to_le_bytes());
    bytes.extend_from_slice(TIME.as_bytes());
    bytes.extend_from_slice(&one[header_len..]);
    assert!(matches!(decode_volume(&bytes), Err(DataError::Truncated { .. })));
}

#[test]
fn crop_offset_ranges_match_arithmetic() {
    let v = synth_generate(3, &SynthParams { dims: [128, 200, 20], n_layers: 20, ..SynthParams::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut max_y, mut max_z) = (0, 0);
    for _ in 0..300 {
        let (c, off) = crop_sample(&v, [128, 128, 16], CropMode::Random(&mut rng), CropConstraint::None).unwrap();
        assert_eq!(c.dims, [128, 128, 16]);
        assert!(off[1] <= 72 && off[2] <= 4);
        max_y = max_y.max(off[1]);
        max_z = max_z.max(off[2]);
    }
    assert_eq!(max_z, 4);
    assert!(max_y > 60);
    assert_eq!(extremity_offsets(v.dims, [128, 128, 16]).unwrap(), [[0, 0, 0], [0, 72, 0]]);
}

#[test]
fn synth_honors_superposition_and_range() {
    for seed in 0..10 {
        let p = SynthParams { empty_top_max: 2, ..SynthParams::default() };
        let v = synth_generate(seed, &p).unwrap();
        assert_eq!(honoring_fraction(&v), 1.0);
        assert!(v.coarse().iter().flatten().all(|c| (0.0..=1.0).contains(c)));
        let filled = fill_above_topography(&v).unwrap();
        assert_eq!(honoring_fraction(&filled), 1.0);
    }
}

#[test]
fn distinct_seeds_give_distinct_volumes() {
    let p = SynthParams::default();
    for pair in 0..20u64 {
        let a = synth_generate(2 * pair, &p).unwrap();
        let b = synth_generate(2 * pair + 1, &p).unwrap();
        let differ = a.coarse().iter().zip(b.coarse()).filter(|(x, y)| x != y).count();
        assert!(differ as f64 >= 0.01 * a.cells() as f64);
    }
}

#[test]
fn synthetic_samples_are_deterministic_and_in_range() {
    let spec = PipelineSpec::default();
    let ids: Vec<u64> = (1..=6).collect();
    let a = synth_samples(9, &ids, &SynthParams::default(), &spec).unwrap();
    let b = synth_samples(9, &ids, &SynthParams::default(), &spec).unwrap();
    assert_eq!(a, b);
    for s in &a {
        assert_eq!(s.tensor.shape(), &[2, 32, 32, 8]);
        let n = 32 * 32 * 8;
        let t = &s.tensor.data()[n..];
        assert_eq!(t.iter().cloned().fold(f64::INFINITY, f64::min), -1.0);
        assert_eq!(t.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        assert!(s.tensor.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fill_never_touches_deposited_cells(seed in 0u64..10_000) {
        let v = random_volume(seed, [4, 5, 6]);
        let f = fill_above_topography(&v).unwrap();
        prop_assert!(!f.has_empty_cells());
        for (ch, fch) in v.channels.iter().zip(&f.channels) {
            for (a, b) in ch.values.iter().zip(&fch.values) {
                if a.is_some() {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn scale_then_unscale_is_exact(seed in 0u64..10_000) {
        let v = fill_above_topography(&random_volume(seed, [3, 4, 5])).unwrap();
        let s = scale_sample(&v, ChannelSet::CoarseAndTime, seed, [0; 3]).unwrap();
        prop_assert_eq!(unscale_sample(&s).unwrap(), v.clone());
        let t = unscale_values(&s, 1);
        let [nx, ny, nz] = v.dims;
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let orig = v.time().unwrap()[v.index(x, y, z)].unwrap() as f64;
                    prop_assert!((t[(x * ny + y) * nz + z] - orig).abs() <= 1e-12 * orig.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn pipeline_is_deterministic(seed in 0u64..1000, id in 1u64..100) {
        let spec = PipelineSpec { sample_size: [16, 16, 6], ..PipelineSpec::default() };
        let a = synth_samples(seed, &[id], &SynthParams::default(), &spec).unwrap();
        let b = synth_samples(seed, &[id], &SynthParams::default(), &spec).unwrap();
        prop_assert_eq!(a, b);
    }
}
