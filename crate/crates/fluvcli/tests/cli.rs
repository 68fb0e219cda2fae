use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fluvcli::commands::*;
use fluvcli::{resolve, CliError, Overrides};
use fluvgan::{read_metrics, GanState};
use gradcore::Tensor;
use stratadata::load_volume;

const TINY: &str = r#"{
  "preset": "arch4",
  "seed": 3,
  "architecture": {"base_channels": 4},
  "latent": {"dim": 3, "spatial": [2, 2, 2]},
  "train": {
    "batch_size": 4, "total_g_iterations": 4, "r1_interval": 2,
    "validation_interval": 2, "checkpoint_interval": 2, "validation_samples": 6,
    "swd": {"patch_shape": [3, 3, 3], "patches_per_level": 64, "n_projections": 16, "max_levels": 2, "seed": 0}
  },
  "data": {
    "source": {"source": "synth", "count": 14},
    "pipeline": {"sample_size": [8, 8, 4]},
    "split": {"n_train": 8, "n_val": 4, "n_test": 2}
  }
}"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluvcli")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_tiny(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.json");
    fs::write(&p, TINY).unwrap();
    p
}

/// Trains the tiny config into `dir/run` once per call.
fn trained(dir: &Path) -> PathBuf {
    let ov = Overrides { out: Some(dir.join("run")), ..Default::default() };
    let cfg = resolve(Some(TINY), &ov).unwrap();
    cmd_train(&cfg, None, false).unwrap();
    dir.join("run/checkpoints/iter_4.ckpt")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn train_writes_echo_metrics_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny(tmp.path());
    let run = tmp.path().join("a");
    let o = bin(&["--config", s(&cfg), "--out", s(&run), "--threads", "1", "train", "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_metrics(run.join("metrics.csv")).unwrap();
    assert!(rows.len() >= 1);
    assert!(run.join("checkpoints/iter_4.ckpt").exists());
    let echo = fs::read_to_string(run.join("run.json")).unwrap();
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap(), serde_json::from_str::<serde_json::Value>(&echo).unwrap());

    // The echo alone reproduces the run.
    let again = tmp.path().join("b");
    let o = bin(&["--config", s(&run.join("run.json")), "--out", s(&again), "--threads", "1", "train", "--quiet"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(run.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());
    assert_eq!(files(&run.join("checkpoints")), files(&again.join("checkpoints")));
}

#[test]
fn arch0_builds_a_sigmoid_terminated_discriminator() {
    let cfg = resolve(Some(TINY), &Overrides { preset: Some("arch0".into()), ..Default::default() }).unwrap();
    assert!(!cfg.architecture.logits_loss && !cfg.architecture.residual_blocks);
    let st = GanState::<f64>::new(cfg.run_config()).unwrap();
    assert!(st.d.describe().contains("sigmoid"), "{}", st.d.describe());
    let cfg = resolve(Some(TINY), &Overrides::default()).unwrap();
    assert!(!GanState::<f64>::new(cfg.run_config()).unwrap().d.describe().contains("sigmoid"));
}

#[test]
fn unwritable_output_is_a_clean_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny(tmp.path());
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let before = files(tmp.path());
    let o = bin(&["--config", s(&cfg), "--out", s(&blocker.join("run")), "train", "--quiet"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(tmp.path()), before);
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 2);
}

#[test]
fn usage_config_and_format_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&bin(&["--help"])), 0);
    assert_eq!(code(&bin(&["frobnicate"])), 1);
    assert_eq!(code(&bin(&["generate"])), 1);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"batchsize": 4}}"#).unwrap();
    assert_eq!(code(&bin(&["--config", s(&bad), "train"])), 1);
    assert_eq!(code(&bin(&["--config", s(&tmp.path().join("missing.json")), "train"])), 1);
    assert_eq!(code(&bin(&["train", "--preset", "arch9", "--out", s(&tmp.path().join("r"))])), 1);
    let junk = tmp.path().join("junk.ckpt");
    fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(code(&bin(&["--out", s(&tmp.path().join("g")), "generate", "--checkpoint", s(&junk)])), 2);
    assert_eq!(code(&bin(&["report", "--run", s(tmp.path())])), 2);
}

#[test]
fn generate_is_deterministic_unfiltered_and_unscaled() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path());
    let args = |out: &str, count| GenerateArgs {
        checkpoint: ckpt.clone(),
        count,
        seed: 9,
        out: tmp.path().join(out),
        png: true,
        cell_size: [50.0, 50.0, 0.5],
    };
    let a = cmd_generate(&args("g1", 3)).unwrap();
    cmd_generate(&args("g2", 3)).unwrap();
    let samples = |d: &str| files(&tmp.path().join(d)).into_iter().filter(|f| f.0 != "generate.json").collect::<Vec<_>>();
    assert_eq!(samples("g1"), samples("g2"));
    assert_eq!(samples("g1").len(), 3 + 3 * 4);
    assert_eq!(a.len(), 3);
    for i in 0..3 {
        let v = load_volume(tmp.path().join(format!("g1/sample_{i:05}.flvd"))).unwrap();
        assert_eq!(v.dims, [8, 8, 4]);
        for c in &v.channels {
            assert!(c.values.iter().all(|x| x.is_some_and(|x| (0.0..=1.0).contains(&x))), "{}", c.name);
        }
        assert!(tmp.path().join(format!("g1/sample_{i:05}_c1_v.png")).exists());
    }
    // A longer run starts with the same samples.
    let b = cmd_generate(&args("g3", 5)).unwrap();
    assert_eq!(&b[..3], &a[..]);

    assert!(cmd_generate(&args("none", 0)).unwrap().is_empty());
    assert!(!tmp.path().join("none").exists());
}

#[test]
fn validate_writes_scores_embedding_and_nearest_table() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path());
    let data = resolve(Some(TINY), &Overrides::default()).unwrap().data;
    let a = ValidateArgs {
        checkpoint: ckpt.clone(),
        data: data.clone(),
        count: 5,
        seed: 2,
        out: tmp.path().join("v"),
        extremity: false,
        nearest: true,
        mds_items: 3,
    };
    let r = cmd_validate(&a).unwrap();
    assert_eq!((r.generated, r.reference), (5, 2));
    assert!(r.d_w.mean > 0.0 && r.d_w.mean.is_finite());
    assert_eq!(r.f_s_values.len(), 5);
    assert!(r.f_s.is_some());
    assert_eq!(r.mds.len(), 5);
    assert_eq!(r.mds.iter().filter(|m| m.0 == "reference").count(), 2);
    assert_eq!(r.nearest.len(), 5);
    assert!(r.nearest.iter().all(|n| (1..=8).contains(&n.1) && n.2 > 0.0));
    for f in ["report.json", "fs.csv", "mds.csv", "nearest.csv", "validate.json"] {
        assert!(a.out.join(f).exists(), "{f}");
    }
    let mds = fs::read_to_string(a.out.join("mds.csv")).unwrap();
    assert_eq!(mds.lines().next(), Some("index,set,mds_x,mds_y"));
    assert_eq!(mds.lines().nth(1).unwrap().split(',').take(2).collect::<Vec<_>>(), vec!["0", "generated"]);
    let dw = fs::read_to_string(a.out.join("dw.csv")).unwrap();
    assert_eq!(dw.lines().count(), 2 + r.d_w.per_level.len());
    let fs_csv = fs::read_to_string(a.out.join("fs.csv")).unwrap();
    assert_eq!(fs_csv.lines().count(), 6);

    let ext = ValidateArgs { extremity: true, nearest: false, out: tmp.path().join("ve"), ..a };
    let r = cmd_validate(&ext).unwrap();
    assert_eq!(r.reference, 4);
    assert!(!ext.out.join("nearest.csv").exists());
}

#[test]
fn validate_reads_the_run_data_section_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path());
    let d = run_data_config(&ckpt).unwrap();
    assert_eq!(d, resolve(Some(TINY), &Overrides::default()).unwrap().data);
    let out = tmp.path().join("v");
    let o = bin(&["--out", s(&out), "--threads", "1", "validate", "--checkpoint", s(&ckpt), "--count", "3", "--mds-items", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reference"], 2);
}

#[test]
fn interpolation_corners_and_identities() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path());
    let corners = [11, 12, 13, 14];
    let args = |out: &str, grid, spherical, corners| InterpolateArgs {
        checkpoint: ckpt.clone(),
        corners,
        grid,
        spherical,
        out: tmp.path().join(out),
        png: false,
        cell_size: [1.0; 3],
    };
    let direct = |seed| {
        let g = GenerateArgs { checkpoint: ckpt.clone(), count: 1, seed, out: tmp.path().join(format!("d{seed}")), png: false, cell_size: [1.0; 3] };
        cmd_generate(&g).unwrap().remove(0)
    };
    let want: Vec<Tensor<f64>> = corners.iter().map(|&c| direct(c)).collect();
    // Row-major over (v, u): (0,0)=z00, (0,1)=z10, (1,0)=z01, (1,1)=z11.
    for spherical in [false, true] {
        let grid = cmd_interpolate(&args(&format!("i2{spherical}"), 2, spherical, corners)).unwrap();
        assert_eq!(grid, vec![want[0].clone(), want[2].clone(), want[1].clone(), want[3].clone()]);
        let grid = cmd_interpolate(&args(&format!("i4{spherical}"), 4, spherical, corners)).unwrap();
        assert_eq!((grid[0].clone(), grid[3].clone(), grid[12].clone(), grid[15].clone()), (want[0].clone(), want[2].clone(), want[1].clone(), want[3].clone()));
        let same = cmd_interpolate(&args(&format!("s{spherical}"), 3, spherical, [5; 4])).unwrap();
        assert!(same.iter().all(|t| t == &same[0]));
    }
    assert_eq!(fs::read_dir(tmp.path().join("i4false")).unwrap().count(), 16 + 1);
    assert!(matches!(cmd_interpolate(&args("bad", 1, false, corners)), Err(CliError::Config(_))));
}

#[test]
fn bilinear_midpoint_is_the_corner_mean() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let z: [Tensor<f64>; 4] = std::array::from_fn(|_| Tensor::randn(vec![3, 2, 2, 2], &mut rng));
    let mid = bilinear(&z, 0.5, 0.5);
    for i in 0..mid.len() {
        let mean = (z[0].data()[i] + z[1].data()[i] + z[2].data()[i] + z[3].data()[i]) / 4.0;
        assert!((mid.data()[i] - mean).abs() <= 1e-12);
    }
    assert_eq!(bilinear(&z, 0.0, 0.0), z[0]);
    assert_eq!(bilinear(&z, 1.0, 1.0), z[3]);
    assert_eq!(spherical(&z, 0.0, 1.0), z[1]);
    assert_eq!(spherical(&z, 1.0, 0.0), z[2]);
}

#[test]
fn extrapolation_grows_by_the_upsampling_factor() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path());
    let args = |out: &str, extra| ExtrapolateArgs {
        checkpoint: ckpt.clone(),
        extra,
        seed: 6,
        count: 2,
        out: tmp.path().join(out),
        png: false,
        cell_size: [1.0; 3],
    };
    // Latent (2,2,2) to (8,8,4): factors (4,4,2).
    let (same, r) = cmd_extrapolate(&args("e0", [0, 0, 0])).unwrap();
    assert_eq!(r.output_shape, vec![2, 8, 8, 4]);
    let g = GenerateArgs { checkpoint: ckpt.clone(), count: 2, seed: 6, out: tmp.path().join("g"), png: false, cell_size: [1.0; 3] };
    assert_eq!(same, cmd_generate(&g).unwrap());
    for (extra, shape) in [([1, 1, 1], [12, 12, 6]), ([2, 0, 0], [16, 8, 4]), ([0, 1, 3], [8, 12, 10])] {
        let (s, r) = cmd_extrapolate(&args(&format!("e{extra:?}"), extra)).unwrap();
        assert_eq!(r.output_shape[1..], shape);
        assert_eq!(s[0].shape()[1..], shape);
        assert_eq!(r.f_s.len(), 2);
        assert!(r.f_s.iter().all(|f| f.is_some_and(|f| (0.0..=1.0).contains(&f))));
    }
}

#[test]
fn enlarged_latents_keep_the_base_at_the_origin() {
    let cfg = resolve(Some(TINY), &Overrides::default()).unwrap().run_config();
    let base = draw_latents(&cfg, 8, 2);
    let big = enlarged_latents(&cfg, 8, 2, [1, 2, 0]);
    assert_eq!(big[0].shape(), &[3, 3, 4, 2]);
    for (b, z) in big.iter().zip(&base) {
        for c in 0..3 {
            for x in 0..2 {
                for y in 0..2 {
                    for k in 0..2 {
                        assert_eq!(b.data()[((c * 3 + x) * 4 + y) * 2 + k], z.data()[((c * 2 + x) * 2 + y) * 2 + k]);
                    }
                }
            }
        }
    }
    assert_ne!(big[0], big[1]);
}

#[test]
fn ablation_table_has_one_row_per_model() {
    let tmp = tempfile::tempdir().unwrap();
    let ov = Overrides { out: Some(tmp.path().join("ab")), g_iters: Some(2), seed: Some(40), ..Default::default() };
    let rows = cmd_ablate(Some(TINY), &ov, &["arch0".into(), "arch4".into()], 3).unwrap();
    assert_eq!(rows.len(), 6);
    for p in ["arch0", "arch4"] {
        let seeds: Vec<u64> = rows.iter().filter(|r| r.preset == p).map(|r| r.seed).collect();
        assert_eq!(seeds, vec![40, 41, 42]);
    }
    assert!(rows.iter().all(|r| r.status == "completed" && r.iterations == 2 && r.final_d_w.is_some()));
    let csv = fs::read_to_string(tmp.path().join("ab/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(csv.lines().next().unwrap(), ABLATION_HEADER);
    assert!(tmp.path().join("ab/arch4/seed_42/metrics.csv").exists());
    assert!(cmd_ablate(Some(TINY), &ov, &[], 1).is_err());
}

#[test]
fn collapsed_runs_stay_in_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = TINY.replace(r#""base_channels": 4"#, r#""base_channels": 4, "lr_g": 1e300, "lr_d": 1e300"#);
    let ov = Overrides { out: Some(tmp.path().join("ab")), g_iters: Some(4), ..Default::default() };
    let rows = cmd_ablate(Some(&doc), &ov, &["arch1".into()], 1).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, "collapsed");
    assert!(tmp.path().join("ab/arch1/seed_3/diagnostic.txt").exists());
}

#[test]
fn synth_writes_the_configured_realizations() {
    let tmp = tempfile::tempdir().unwrap();
    let data = resolve(Some(TINY), &Overrides::default()).unwrap().data;
    let paths = cmd_synth(&data, 3, &tmp.path().join("s")).unwrap();
    assert_eq!(paths.len(), 3);
    assert!(paths[2].ends_with("realization_00003.flvd"));
    let want = stratadata::synth_generate(stratadata::realization_seed(data.seed, 2), &Default::default()).unwrap();
    assert_eq!(load_volume(&paths[1]).unwrap(), want);

    // A directory source of those files yields the same samples.
    let doc = format!(r#"{{"data": {{"source": {{"source": "directory", "path": {:?}}}, "split": {{"n_train": 2, "n_val": 1}}}}}}"#, tmp.path().join("s"));
    let dir = resolve(Some(&doc), &Overrides::default()).unwrap().data;
    let mut synth = dir.clone();
    synth.source = fluvcli::DataSource::Synth { params: Default::default(), count: 3 };
    assert_eq!(fluvcli::data::load(&dir).unwrap().train, fluvcli::data::load(&synth).unwrap().train);
}

#[test]
fn report_renders_curves_and_slices_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    trained(tmp.path());
    let run = tmp.path().join("run");
    let a = cmd_report(&run, &tmp.path().join("r1"), 2, 0).unwrap();
    cmd_report(&run, &tmp.path().join("r2"), 2, 0).unwrap();
    assert_eq!(files(&tmp.path().join("r1")), files(&tmp.path().join("r2")));
    let names: Vec<String> = a.files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for f in ["summary.txt", "d_w.png", "f_s.png", "sample_01_c0_h.png", "sample_01_c1_v.png"] {
        assert!(names.contains(&f.to_string()), "{f}");
    }
    let summary = fs::read_to_string(tmp.path().join("r1/summary.txt")).unwrap();
    assert!(summary.contains("Generator") && summary.contains("parameters"), "{summary}");
}

#[test]
fn report_on_an_empty_run_is_summary_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny(tmp.path());
    let run = tmp.path().join("run");
    let o = bin(&["--config", s(&cfg), "--out", s(&run), "train", "--g-iters", "0", "--quiet"]);
    assert_eq!(code(&o), 0);
    let o = bin(&["report", "--run", s(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = files(&run.join("report")).into_iter().map(|f| f.0).collect();
    assert_eq!(names, vec!["summary.txt"]);
}

#[test]
fn resume_through_the_cli_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny(tmp.path());
    let full = tmp.path().join("full");
    assert_eq!(code(&bin(&["--config", s(&cfg), "--out", s(&full), "train", "-q"])), 0);
    let part = tmp.path().join("part");
    assert_eq!(code(&bin(&["--config", s(&cfg), "--out", s(&part), "train", "-q", "--g-iters", "2"])), 0);
    let ck = part.join("checkpoints/iter_2.ckpt");
    let o = bin(&["--config", s(&cfg), "--out", s(&part), "train", "-q", "--resume", s(&ck)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (read_metrics(full.join("metrics.csv")).unwrap(), read_metrics(part.join("metrics.csv")).unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.iteration, y.iteration);
        assert!((x.d_w - y.d_w).abs() <= 1e-9);
    }
    // A different architecture cannot resume from it.
    let o = bin(&["--config", s(&cfg), "--out", s(&part), "train", "-q", "--preset", "arch1", "--resume", s(&ck)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn reference_against_itself_scores_zero_and_collapses_pairwise() {
    let cfg = resolve(Some(TINY), &Overrides::default()).unwrap();
    let sets = fluvcli::data::load(&cfg.data).unwrap();
    let settings = geovalid::SwdSettings { patches_per_level: 1024, n_projections: 64, ..cfg.train.swd.clone() };
    let r = geovalid::swd_score(&sets.validation, &sets.validation, &settings).unwrap();
    assert_eq!(r.mean, 0.0);
    let pooled: Vec<Tensor<f64>> = sets.validation.iter().chain(&sets.validation).cloned().collect();
    let n = sets.validation.len();
    let dm = geovalid::pairwise_swd(&pooled, &settings).unwrap();
    let coords = geovalid::classical_mds(&dm, 2).unwrap();
    let dist = |a: usize, b: usize| ((coords[a][0] - coords[b][0]).powi(2) + (coords[a][1] - coords[b][1]).powi(2)).sqrt();
    for i in 0..n {
        assert_eq!(dm.get(i, i + n), 0.0);
        let twin = dist(i, i + n);
        let others = (0..n).filter(|&j| j != i).map(|j| dist(i, j)).fold(f64::INFINITY, f64::min);
        assert!(twin < 0.5 * others, "{twin} vs {others}");
    }
}
