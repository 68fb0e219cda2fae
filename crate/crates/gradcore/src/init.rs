//! Weight initialization.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::spectral::MatrixView;
use crate::tensor::Tensor;

/// Default standard deviation of normal initialization.
pub const NORMAL_STD: f64 = 0.02;

/// I.i.d. zero-mean normal draws with standard deviation `std`.
pub fn init_normal<T: Scalar, R: Rng + ?Sized>(w: &mut Tensor<T>, std: f64, rng: &mut R) {
    for v in w.data_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = T::of(z * std);
    }
}

/// Orthogonal initialization of the matrix view of `w`: rows are
/// orthonormal when `rows <= cols`, columns otherwise.
pub fn init_orthogonal<T: Scalar, R: Rng + ?Sized>(w: &mut Tensor<T>, view: MatrixView, rng: &mut R) {
    let (rows, cols) = view.dims(w.shape());
    let q = orthonormal_matrix(rows, cols, rng);
    let m: Vec<T> = q.into_iter().map(T::of).collect();
    *w = view.from_matrix(&m, w.shape());
}

/// Random `rows x cols` matrix with orthonormal rows (or columns when tall),
/// built by twice-repeated modified Gram-Schmidt on Gaussian vectors.
pub fn orthonormal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let tall = rows > cols;
    let (n_vec, dim) = if tall { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_vec);
    while basis.len() < n_vec {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for (i, b) in basis.iter().enumerate() {
        for (j, &x) in b.iter().enumerate() {
            if tall {
                out[j * cols + i] = x;
            } else {
                out[i * cols + j] = x;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn max_gram_error(m: &[f64], rows: usize, cols: usize) -> f64 {
        let tall = rows > cols;
        let (n, d) = if tall { (cols, rows) } else { (rows, cols) };
        let at = |i: usize, k: usize| if tall { m[k * cols + i] } else { m[i * cols + k] };
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..d).map(|k| at(i, k) * at(j, k)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }

    #[test]
    fn orthogonal_square_wide_and_tall() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(16, 16), (4, 27), (27, 4)] {
            let m = orthonormal_matrix(r, c, &mut rng);
            assert!(max_gram_error(&m, r, c) <= 1e-6);
        }
    }

    #[test]
    fn orthogonal_conv_weight() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut w = Tensor::<f64>::zeros(vec![16, 2, 2, 2, 1]);
        init_orthogonal(&mut w, MatrixView { row_axis: 0 }, &mut rng);
        assert!(max_gram_error(w.data(), 16, 8) <= 1e-6);
        let mut wt = Tensor::<f64>::zeros(vec![4, 8, 2, 1, 1]);
        let view = MatrixView { row_axis: 1 };
        init_orthogonal(&mut wt, view, &mut rng);
        assert!(max_gram_error(&view.to_matrix(&wt), 8, 8) <= 1e-6);
    }

    #[test]
    fn normal_moments_and_determinism() {
        let mut a = Tensor::<f64>::zeros(vec![100_000]);
        let mut b = a.clone();
        init_normal(&mut a, NORMAL_STD, &mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        init_normal(&mut b, NORMAL_STD, &mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let n = a.len() as f64;
        let mean = a.sum() / n;
        let sd = (a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 0.02).abs() / 0.02 < 0.03);
    }
}
