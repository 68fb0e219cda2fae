use std::fs;

use fluvgan::*;
use gradcore::gradcheck::check_gradient;
use gradcore::loss::{bce, bce_with_logits};
use gradcore::ops;
use gradcore::{NormMode, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn run_config(preset: &str, total: u64) -> RunConfig {
    let mut a = resolve_preset(preset).unwrap();
    a.base_channels = 4;
    a.target_shape = [8, 8, 4];
    let train = TrainConfig {
        batch_size: 4,
        total_g_iterations: total,
        r1_interval: 2,
        validation_interval: 2,
        checkpoint_interval: 3,
        validation_samples: 6,
        swd: geovalid::SwdSettings { patch_shape: [3, 3, 3], patches_per_level: 64, n_projections: 16, max_levels: 2, seed: 0 },
        ..TrainConfig::default()
    };
    RunConfig { seed: 17, architecture: a, latent: LatentSpec { dim: 3, spatial: [2, 2, 2] }, train }
}

fn data(n: u64) -> Vec<Tensor<f64>> {
    let spec = stratadata::PipelineSpec { sample_size: [8, 8, 4], ..Default::default() };
    let ids: Vec<u64> = (1..=n).collect();
    stratadata::synth_samples(5, &ids, &stratadata::SynthParams::default(), &spec)
        .unwrap()
        .into_iter()
        .map(|s| s.tensor)
        .collect()
}

fn zero_params(net: &mut Network<f64>) {
    for p in net.params.iter_mut() {
        p.value = p.value.map(|_| 0.0);
    }
}

#[test]
fn symmetric_discriminator_losses() {
    let mut st = GanState::<f64>::new(run_config("arch1", 1)).unwrap();
    zero_params(&mut st.d);
    let real = Tensor::stack(&data(4)).unwrap();
    let d_loss = d_step(&mut st, real, &mut rng(1)).unwrap();
    assert!((d_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "{d_loss}");
    zero_params(&mut st.d);
    let g_loss = g_step(&mut st, 4, &mut rng(2)).unwrap();
    assert!((g_loss - std::f64::consts::LN_2).abs() < 1e-12, "{g_loss}");
}

#[test]
fn each_step_freezes_the_other_network() {
    for preset in ["arch0", "arch4", "arch8"] {
        let mut st = GanState::<f64>::new(run_config(preset, 1)).unwrap();
        let real = Tensor::stack(&data(4)).unwrap();
        let g_before = st.g.clone();
        d_step(&mut st, real, &mut rng(1)).unwrap();
        assert_eq!(st.g, g_before, "{preset}: d_step touched G");
        let d_before = st.d.clone();
        g_step(&mut st, 4, &mut rng(2)).unwrap();
        assert_eq!(st.d.params, d_before.params, "{preset}: g_step touched D");
    }
}

#[test]
fn probability_loss_tracks_logit_loss() {
    let lo = (1e-6f64 / (1.0 - 1e-6)).ln();
    for i in 0..=400 {
        let l = lo + (-2.0 * lo) * i as f64 / 400.0;
        for y in [0.0, 1.0] {
            let t = Tensor::full(vec![1, 1], y);
            let logit = Var::constant(Tensor::full(vec![1, 1], l));
            let a = bce(&ops::sigmoid(&logit), &t).unwrap().item();
            let b = bce_with_logits(&logit, &t).unwrap().item();
            assert!((a - b).abs() <= 1e-9, "l={l}: {a} vs {b}");
        }
    }
}

#[test]
fn generator_step_descends() {
    let mut run = run_config("arch1", 1);
    run.architecture.lr_g = 1e-5;
    let mut st = GanState::<f64>::new(run).unwrap();
    let before = g_step(&mut st, 4, &mut rng(3)).unwrap();
    let after = g_step(&mut st, 4, &mut rng(3)).unwrap();
    assert!(after < before, "{after} >= {before}");
}

/// `D(x) = w . x` as a single full-extent convolution.
fn linear_critic(w: &[f64]) -> Network<f64> {
    let mut b = NetworkBuilder::<f64>::new(0, 0);
    let conv = b.conv("lin", 1, 1, [2, 2, 1], [1; 3], [0; 3], false);
    let mut net = b.finish(Role::Discriminator, vec![conv, Layer::Flatten], [1, 2, 2, 1]);
    net.params[0].value = Tensor::new(vec![1, 1, 2, 2, 1], w.to_vec()).unwrap();
    net
}

#[test]
fn r1_of_linear_and_constant_critics() {
    let w = [0.5, -1.0, 2.0, 0.25];
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    for n in [1, 3, 7] {
        let mut d = linear_critic(&w);
        let b = d.bind(false, false).unwrap();
        let x = Var::leaf(Tensor::randn(vec![n, 1, 2, 2, 1], &mut rng(n as u64)));
        let out = d.forward(&b, &x, NormMode::Eval).unwrap();
        let p = r1_penalty(&out, &x, 10.0).unwrap().item();
        assert!((p - 5.0 * norm2).abs() < 1e-12, "{p}");

        let constant = ops::add_scalar(&ops::scale(&out, 0.0), 3.0);
        assert_eq!(r1_penalty(&constant, &x, 10.0).unwrap().item(), 0.0);
        let detached = Var::constant(Tensor::full(vec![n, 1], 2.0));
        assert_eq!(r1_penalty(&detached, &x, 10.0).unwrap().item(), 0.0);
    }
}

#[test]
fn gradient_penalty_of_linear_critics() {
    for (w, want) in [([1.0, 0.0, 0.0, 0.0], 0.0), ([0.5, 0.5, 0.5, 0.5], 0.0), ([3.0, 0.0, 0.0, 0.0], 4.0), ([1.5, 1.5, 1.5, 1.5], 4.0)] {
        let mut d = linear_critic(&w);
        let b = d.bind(false, false).unwrap();
        let real = Tensor::randn(vec![5, 1, 2, 2, 1], &mut rng(1));
        let fake = Tensor::randn(vec![5, 1, 2, 2, 1], &mut rng(2));
        let p = gradient_penalty(&mut d, &b, &real, &fake, &mut rng(3)).unwrap().item();
        assert!((p - want).abs() < 1e-9, "{w:?}: {p}");
    }
}

/// Small residual critic without spectral normalization, so raw and
/// effective parameters coincide.
fn plain_critic() -> Network<f64> {
    let mut run = run_config("arch4", 1);
    run.architecture.spectral_norm = false;
    build_discriminator(&run.architecture, &run.latent, 4).unwrap()
}

fn check_penalty<F>(name: &str, f: F, inputs: &[Tensor<f64>])
where
    F: Fn(&[Var<f64>]) -> gradcore::Result<Var<f64>>,
{
    for which in 0..inputs.len() {
        let res = check_gradient(&f, inputs, which, 1e-5, 20, 1e-3, &mut rng(30 + which as u64)).unwrap();
        assert!(res.coordinates >= 20.min(inputs[which].len()));
        assert!(res.max_rel_error <= 1e-5, "{name} parameter {which}: {}", res.max_rel_error);
    }
}

#[test]
fn r1_parameter_gradients_match_finite_differences() {
    let d = std::cell::RefCell::new(plain_critic());
    let inputs: Vec<Tensor<f64>> = d.borrow().params.iter().map(|p| p.value.map(|v| v + 0.05)).collect();
    let x = Tensor::randn(vec![3, 2, 8, 8, 4], &mut rng(8));
    let f = |v: &[Var<f64>]| {
        let bound = Bound { raw: v.to_vec(), effective: v.to_vec() };
        let xv = Var::leaf(x.clone());
        let out = d.borrow_mut().forward(&bound, &xv, NormMode::Train { update_stats: false }).unwrap();
        Ok(r1_penalty(&out, &xv, 10.0).unwrap())
    };
    check_penalty("r1", f, &inputs);
}

#[test]
fn gradient_penalty_parameter_gradients_match_finite_differences() {
    let d = std::cell::RefCell::new(plain_critic());
    let inputs: Vec<Tensor<f64>> = d.borrow().params.iter().map(|p| p.value.map(|v| v + 0.05)).collect();
    let real = Tensor::randn(vec![3, 2, 8, 8, 4], &mut rng(8));
    let fake = Tensor::randn(vec![3, 2, 8, 8, 4], &mut rng(9));
    let f = |v: &[Var<f64>]| {
        let bound = Bound { raw: v.to_vec(), effective: v.to_vec() };
        Ok(gradient_penalty(&mut d.borrow_mut(), &bound, &real, &fake, &mut rng(10)).unwrap())
    };
    check_penalty("gradient penalty", f, &inputs);
}

#[test]
fn two_critic_steps_per_generator_step() {
    let mut run = run_config("arch5", 3);
    run.train.loss_mode = LossMode::WganGp;
    let mut st = GanState::<f64>::new(run).unwrap();
    let d = data(8);
    for _ in 0..3 {
        let (g, dl) = train_iteration(&mut st, &d).unwrap();
        assert!(g.is_finite() && dl.is_finite());
    }
    assert_eq!(st.d_steps, 6);
    assert!(st.g.params.iter().all(|p| p.step_count == 3));
    assert!(st.d.params.iter().all(|p| p.step_count == 6));
}

fn run_to(dir: &std::path::Path, run: RunConfig, d: &[Tensor<f64>]) -> Vec<MetricsRow> {
    let mut st = GanState::<f64>::new(run).unwrap();
    let v = Validator::new(&st, d).unwrap();
    train(&mut st, d, &v, dir, &TrainOptions::default()).unwrap()
}

#[test]
fn empty_run_has_initial_checkpoint_and_no_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = run_to(tmp.path(), run_config("arch4", 0), &data(6));
    assert!(rows.is_empty());
    assert!(checkpoint_path(tmp.path(), 0).exists());
    assert!(read_metrics(tmp.path().join("metrics.csv")).unwrap().is_empty());
    let echoed: RunConfig = serde_json::from_str(&fs::read_to_string(tmp.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed, run_config("arch4", 0));
}

#[test]
fn runs_are_reproducible_and_complete() {
    let d = data(6);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let rows = run_to(a.path(), run_config("arch4", 5), &d);
    run_to(b.path(), run_config("arch4", 5), &d);
    let iters: Vec<u64> = rows.iter().map(|r| r.iteration).collect();
    assert_eq!(iters, vec![0, 2, 4, 5]);
    assert!(rows[0].g_loss.is_none() && rows[1].g_loss.is_some());
    assert!(rows.iter().all(|r| r.d_w.is_finite() && r.f_s.is_some_and(|f| (0.0..=1.0).contains(&f))));
    assert_eq!(fs::read(a.path().join("metrics.csv")).unwrap(), fs::read(b.path().join("metrics.csv")).unwrap());
    for it in [0, 3, 5] {
        assert_eq!(fs::read(checkpoint_path(a.path(), it)).unwrap(), fs::read(checkpoint_path(b.path(), it)).unwrap());
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut st = GanState::<f64>::new(run_config("arch8", 2)).unwrap();
    let d = data(6);
    train_iteration(&mut st, &d).unwrap();
    let bytes = encode_checkpoint(&st).unwrap();
    let mut back: GanState<f64> = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, st);
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    let z = st.latents(3, [2, 2, 2], &mut rng(4));
    assert_eq!(generate(&mut back.g, &z, 2).unwrap(), generate(&mut st.g, &z, 2).unwrap());

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("x.ckpt");
    save_checkpoint(&st, &path).unwrap();
    assert_eq!(load_checkpoint::<f64>(&path).unwrap(), st);
    assert!(matches!(load_checkpoint::<f32>(&path), Err(GanError::Format(_))));
    let (tag, run) = peek_checkpoint(&bytes).unwrap();
    assert_eq!((tag.as_str(), run), ("f64", st.run.clone()));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let st = GanState::<f64>::new(run_config("arch4", 1)).unwrap();
    let bytes = encode_checkpoint(&st).unwrap();
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_checkpoint::<f64>(&magic), Err(GanError::Format(_))));
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(decode_checkpoint::<f64>(&version), Err(GanError::Format(_))));
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_checkpoint::<f64>(&bytes[..cut]), Err(GanError::Format(_))), "cut {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_checkpoint::<f64>(&long), Err(GanError::Format(_))));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let d = data(6);
    let full = tempfile::tempdir().unwrap();
    let want = run_to(full.path(), run_config("arch4", 6), &d);

    let part = tempfile::tempdir().unwrap();
    run_to(part.path(), run_config("arch4", 3), &d);
    let mut st: GanState<f64> = load_checkpoint(&checkpoint_path(part.path(), 3)).unwrap();
    st.run.train.total_g_iterations = 6;
    let v = Validator::new(&st, &d).unwrap();
    let got = train(&mut st, &d, &v, part.path(), &TrainOptions::default()).unwrap();
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert_eq!(a.iteration, b.iteration);
        assert!((a.d_w - b.d_w).abs() <= 1e-9);
        for (x, y) in [(a.g_loss, b.g_loss), (a.d_loss, b.d_loss), (a.f_s, b.f_s)] {
            assert!((x.unwrap_or(0.0) - y.unwrap_or(0.0)).abs() <= 1e-9);
        }
    }
    assert_eq!(
        fs::read(checkpoint_path(part.path(), 6)).unwrap(),
        fs::read(checkpoint_path(full.path(), 6)).unwrap()
    );
}

#[test]
fn non_finite_loss_aborts_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = data(6);
    let mut st = GanState::<f64>::new(run_config("arch4", 4)).unwrap();
    let v = Validator::new(&st, &d).unwrap();
    let last = st.d.params.len() - 1;
    st.d.params[last].value = st.d.params[last].value.map(|_| f64::NAN);
    let err = train(&mut st, &d, &v, tmp.path(), &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, GanError::NonFinite { iteration: 0, .. }), "{err}");
    let diag = fs::read_to_string(tmp.path().join("diagnostic.txt")).unwrap();
    assert!(diag.contains("d.head.b"), "{diag}");
    assert!(read_metrics(tmp.path().join("metrics.csv")).is_ok());
}

#[test]
fn single_precision_training_runs() {
    let mut run = run_config("arch4", 2);
    run.train.precision = Precision::F32;
    let mut st = GanState::<f32>::new(run).unwrap();
    let d: Vec<Tensor<f32>> = data(6).iter().map(|t| t.cast()).collect();
    for _ in 0..2 {
        let (g, dl) = train_iteration(&mut st, &d).unwrap();
        assert!(g.is_finite() && dl.is_finite());
    }
    let bytes = encode_checkpoint(&st).unwrap();
    assert_eq!(decode_checkpoint::<f32>(&bytes).unwrap(), st);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let mut v = serde_json::to_value(run_config("arch4", 1)).unwrap();
    assert!(serde_json::from_value::<RunConfig>(v.clone()).is_ok());
    v["train"]["bogus"] = 1.into();
    assert!(serde_json::from_value::<RunConfig>(v).is_err());
}
