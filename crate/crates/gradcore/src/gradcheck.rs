//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::tensor::Tensor;
use crate::var::{grad, Var};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coordinates: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of the scalar `f(inputs)` with respect to
/// `inputs[which]` against central differences with step `h`, at up to
/// `coords` randomly chosen coordinates.
pub fn check_gradient<R, F>(
    f: F,
    inputs: &[Tensor<f64>],
    which: usize,
    h: f64,
    coords: usize,
    floor: f64,
    rng: &mut R,
) -> Result<GradCheck>
where
    R: Rng + ?Sized,
    F: Fn(&[Var<f64>]) -> Result<Var<f64>>,
{
    let vars: Vec<Var<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| if i == which { Var::leaf(t.clone()) } else { Var::constant(t.clone()) })
        .collect();
    let out = f(&vars)?;
    let analytic = grad(&out, &[&vars[which]], false)?
        .pop()
        .flatten()
        .map(|g| g.value().clone())
        .unwrap_or_else(|| Tensor::zeros(inputs[which].shape().to_vec()));

    let n = inputs[which].len();
    let picks: Vec<usize> = if n <= coords { (0..n).collect() } else { sample(rng, n, coords).into_vec() };
    let eval = |idx: usize, delta: f64| -> Result<f64> {
        let vs: Vec<Var<f64>> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                if i == which {
                    t.data_mut()[idx] += delta;
                }
                Var::constant(t)
            })
            .collect();
        Ok(f(&vs)?.item())
    };
    let mut worst: f64 = 0.0;
    for &idx in &picks {
        let numeric = (eval(idx, h)? - eval(idx, -h)?) / (2.0 * h);
        worst = worst.max(rel_error(analytic.data()[idx], numeric, floor));
    }
    Ok(GradCheck { max_rel_error: worst, coordinates: picks.len() })
}
