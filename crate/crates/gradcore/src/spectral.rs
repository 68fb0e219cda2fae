//! Power-iteration spectral normalization.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config, Result};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::var::Var;

pub const SPECTRAL_EPS: f64 = 1e-12;

/// View of a weight as a matrix whose rows run over axis `row_axis`
/// (0 for convolution weights, 1 for transposed-convolution weights).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixView {
    pub row_axis: usize,
}

impl MatrixView {
    pub fn dims(&self, shape: &[usize]) -> (usize, usize) {
        let rows = shape[self.row_axis];
        (rows, shape.iter().product::<usize>() / rows.max(1))
    }

    /// Copies the weight into a row-major `rows x cols` buffer.
    pub fn to_matrix<T: Scalar>(&self, w: &Tensor<T>) -> Vec<T> {
        let shape = w.shape();
        match self.row_axis {
            0 => w.data().to_vec(),
            1 => {
                let (a, b) = (shape[0], shape[1]);
                let inner: usize = shape[2..].iter().product();
                let mut out = vec![T::zero(); w.len()];
                for i in 0..a {
                    for j in 0..b {
                        let src = &w.data()[(i * b + j) * inner..(i * b + j + 1) * inner];
                        out[(j * a + i) * inner..(j * a + i + 1) * inner].copy_from_slice(src);
                    }
                }
                out
            }
            _ => panic!("row_axis must be 0 or 1"),
        }
    }

    /// Inverse of [`Self::to_matrix`].
    pub fn from_matrix<T: Scalar>(&self, m: &[T], shape: &[usize]) -> Tensor<T> {
        let data = match self.row_axis {
            0 => m.to_vec(),
            _ => {
                let (a, b) = (shape[0], shape[1]);
                let inner: usize = shape[2..].iter().product();
                let mut out = vec![T::zero(); m.len()];
                for i in 0..a {
                    for j in 0..b {
                        out[(i * b + j) * inner..(i * b + j + 1) * inner]
                            .copy_from_slice(&m[(j * a + i) * inner..(j * a + i + 1) * inner]);
                    }
                }
                out
            }
        };
        Tensor::new(shape.to_vec(), data).expect("shape preserved")
    }
}

/// Random unit vector used to seed the left singular vector estimate.
pub fn random_unit<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| T::of(x / norm)).collect();
        }
    }
}

fn normalize_into<T: Scalar>(v: &[f64], dst: &mut [T]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > SPECTRAL_EPS {
        for (d, x) in dst.iter_mut().zip(v) {
            *d = T::of(x / norm);
        }
    }
}

/// Runs `iterations` rounds of power iteration on the `rows x cols` matrix
/// `m`, updating `u` in place, and returns the estimate `u^T M v`.
///
/// Accumulation is done in `f64` regardless of `T`.
pub fn power_iteration<T: Scalar>(m: &[T], rows: usize, cols: usize, u: &mut [T], iterations: usize) -> T {
    assert_eq!(m.len(), rows * cols);
    assert_eq!(u.len(), rows);
    let mut v = vec![T::zero(); cols];
    let mut tmp_c = vec![0.0f64; cols];
    let mut tmp_r = vec![0.0f64; rows];
    for _ in 0..iterations.max(1) {
        tmp_c.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..rows {
            let ur = u[r].f64();
            for (acc, w) in tmp_c.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
                *acc += ur * w.f64();
            }
        }
        normalize_into(&tmp_c, &mut v);
        for (r, out) in tmp_r.iter_mut().enumerate() {
            *out = m[r * cols..(r + 1) * cols].iter().zip(&v).map(|(w, x)| w.f64() * x.f64()).sum();
        }
        normalize_into(&tmp_r, u);
    }
    // sigma = u^T M v
    let mut sigma = 0.0;
    for r in 0..rows {
        let row: f64 = m[r * cols..(r + 1) * cols].iter().zip(&v).map(|(w, x)| w.f64() * x.f64()).sum();
        sigma += u[r].f64() * row;
    }
    T::of(sigma)
}

/// Returns `w / sigma` where `sigma` is the power-iteration estimate of the
/// top singular value. `sigma` is treated as a constant by backward.
///
/// A zero matrix gives `sigma` clamped to [`SPECTRAL_EPS`] and a zero result.
pub fn spectral_normalize<T: Scalar>(
    w: &Var<T>,
    view: MatrixView,
    u: &mut [T],
    iterations: usize,
) -> Result<(Var<T>, T)> {
    let (rows, cols) = view.dims(w.shape());
    if u.len() != rows {
        return config(format!("spectral state has {} entries, weight has {rows} rows", u.len()));
    }
    let m = view.to_matrix(w.value());
    let sigma = power_iteration(&m, rows, cols, u, iterations).max(T::of(SPECTRAL_EPS));
    Ok((ops::scale(w, T::one() / sigma), sigma))
}
