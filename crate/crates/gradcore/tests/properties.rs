use gradcore::norm::batch_norm;
use gradcore::ops::{self, conv3d, sum_all};
use gradcore::{grad, NormMode, RunningStats, Tensor64, Var64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pipeline(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Var64::leaf(Tensor64::randn(vec![3, 2, 6, 5, 4], &mut rng));
    let w = Var64::leaf(Tensor64::randn(vec![4, 2, 3, 3, 2], &mut rng));
    let mut stats = RunningStats::new(4);
    let g = Var64::constant(Tensor64::ones(vec![4]));
    let b = Var64::constant(Tensor64::zeros(vec![4]));
    let h = conv3d(&x, &w, None, [2, 1, 1], [1, 1, 0]).unwrap();
    let h = batch_norm(&h, &g, &b, &mut stats, NormMode::Train { update_stats: true }).unwrap();
    let loss = sum_all(&ops::square(&ops::leaky_relu(&h, 0.2)));
    let gw = grad(&loss, &[&w], false).unwrap().pop().flatten().unwrap();
    (h.value().data().to_vec(), gw.value().data().to_vec())
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (a, ga) = pipeline(3);
    let (b, gb) = pipeline(3);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(ga.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), gb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn logits_loss_and_sigmoid_stay_finite(l in -1e4f64..1e4, t in 0u8..=1) {
        let y = gradcore::loss::bce_with_logits(
            &Var64::constant(Tensor64::scalar(l)),
            &Tensor64::scalar(t as f64),
        ).unwrap().item();
        prop_assert!(y.is_finite() && y >= 0.0);
        let s = ops::sigmoid(&Var64::constant(Tensor64::scalar(l))).item();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn tanh_stays_in_range(l in -1e4f64..1e4) {
        let y = ops::tanh(&Var64::constant(Tensor64::scalar(l))).item();
        prop_assert!((-1.0..=1.0).contains(&y));
    }

    #[test]
    fn leaky_relu_definition(x in -100f64..100.0, slope in 0.0f64..1.0) {
        let y = ops::leaky_relu(&Var64::constant(Tensor64::scalar(x)), slope).item();
        prop_assert_eq!(y, if x >= 0.0 { x } else { slope * x });
    }

    #[test]
    fn conv_is_linear_in_input(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor64::randn(vec![2, 4, 3, 3], &mut rng);
        let b = Tensor64::randn(vec![2, 4, 3, 3], &mut rng);
        let w = Var64::constant(Tensor64::randn(vec![3, 2, 2, 2, 2], &mut rng));
        let f = |t: &Tensor64| conv3d(&Var64::constant(t.clone()), &w, None, [1, 2, 1], [1, 0, 1]).unwrap().value().clone();
        let combo = a.zip_map(&b, |x, y| alpha * x + y);
        let lhs = f(&combo);
        let rhs = f(&a).zip_map(&f(&b), |x, y| alpha * x + y);
        for (p, q) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((p - q).abs() <= 1e-10);
        }
    }

    #[test]
    fn sum_to_and_broadcast_are_adjoint(seed in 0u64..1000, mask in 0usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let big = [3usize, 2, 4, 5];
        let small: Vec<usize> = big.iter().enumerate().map(|(i, &e)| if mask >> i & 1 == 1 { 1 } else { e }).collect();
        let x = Tensor64::randn(big.to_vec(), &mut rng);
        let y = Tensor64::randn(small.clone(), &mut rng);
        let sx = ops::sum_to(&Var64::constant(x.clone()), &small).unwrap();
        let by = ops::broadcast_to(&Var64::constant(y.clone()), &big).unwrap();
        let lhs = sx.value().dot(&y);
        let rhs = x.dot(by.value());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn spectral_state_stays_unit(seed in 0u64..1000, iters in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Tensor64::randn(vec![6, 3, 2, 1, 1], &mut rng);
        let mut u = gradcore::spectral::random_unit::<f64, _>(6, &mut rng);
        gradcore::spectral::spectral_normalize(&Var64::constant(w), gradcore::MatrixView { row_axis: 0 }, &mut u, iters).unwrap();
        let n: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() <= 1e-6);
    }
}
