use gradcore::spectral::{power_iteration, random_unit, spectral_normalize};
use gradcore::{MatrixView, Tensor64, Var64};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn power_iteration_matches_svd_on_random_64x64() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let m = Tensor64::randn(vec![64, 64], &mut rng);
        let top = DMatrix::from_row_slice(64, 64, m.data()).singular_values().max();
        let mut u = random_unit::<f64, _>(64, &mut rng);
        let sigma = power_iteration(m.data(), 64, 64, &mut u, 50);
        assert!((sigma - top).abs() / top <= 0.01, "{sigma} vs {top}");
    }
}

#[test]
fn normalized_weight_has_unit_top_singular_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for shape in [vec![8, 4, 3, 3, 1], vec![16, 16, 1, 1, 1]] {
        let w = Tensor64::randn(shape, &mut rng);
        let view = MatrixView { row_axis: 0 };
        let (rows, cols) = view.dims(w.shape());
        let mut u = random_unit::<f64, _>(rows, &mut rng);
        let (wn, _) = spectral_normalize(&Var64::constant(w), view, &mut u, 50).unwrap();
        let top = DMatrix::from_row_slice(rows, cols, wn.value().data()).singular_values().max();
        assert!(top <= 1.0 + 1e-3, "{top}");
        let mut u2 = u.clone();
        let est = power_iteration(wn.value().data(), rows, cols, &mut u2, 1);
        assert!(est <= 1.0 + 1e-3);
    }
}

#[test]
fn zero_matrix_is_clamped() {
    let mut u = vec![1.0, 0.0, 0.0];
    let (wn, sigma) =
        spectral_normalize(&Var64::constant(Tensor64::zeros(vec![3, 2])), MatrixView { row_axis: 0 }, &mut u, 5).unwrap();
    assert_eq!(sigma, 1e-12);
    assert!(wn.value().data().iter().all(|&v| v == 0.0));
}
