//! Trainable parameters and the Adam optimizer.

use crate::error::{GradError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A trainable tensor with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Accumulated gradient; `None` until the first accumulation.
    pub grad: Option<Tensor<T>>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    pub step_count: u64,
    /// Left singular vector estimate for spectrally normalized weights.
    pub spectral_u: Option<Vec<T>>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name: name.into(),
            value,
            grad: None,
            adam_m: Tensor::zeros(shape.clone()),
            adam_v: Tensor::zeros(shape),
            step_count: 0,
            spectral_u: None,
        }
    }

    /// Adds `g` into the gradient buffer.
    pub fn accumulate_grad(&mut self, g: &Tensor<T>) -> Result<()> {
        if g.shape() != self.value.shape() {
            return Err(GradError::Contract(format!(
                "gradient {:?} for parameter {} of shape {:?}",
                g.shape(),
                self.name,
                self.value.shape()
            )));
        }
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, ..Self::default() }
    }

    /// One bias-corrected Adam update of every parameter. Parameters without
    /// a gradient are treated as having a zero gradient.
    ///
    /// All gradients are checked first; a non-finite one rejects the whole
    /// step and names the parameter.
    pub fn step<T: Scalar>(&self, params: &mut [Parameter<T>]) -> Result<()> {
        for p in params.iter() {
            if let Some(g) = &p.grad {
                if !g.all_finite() {
                    return Err(GradError::NonFinite(format!("gradient of {}", p.name)));
                }
            }
        }
        for p in params.iter_mut() {
            self.step_one(p);
        }
        Ok(())
    }

    fn step_one<T: Scalar>(&self, p: &mut Parameter<T>) {
        p.step_count += 1;
        let t = p.step_count as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - T::of(self.beta1.powi(t));
        let c2 = T::one() - T::of(self.beta2.powi(t));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        let n = p.value.len();
        let grad = p.grad.as_ref().map(|g| g.data().to_vec());
        let grad = grad.as_deref();
        let (m, v, w) = (p.adam_m.data_mut(), p.adam_v.data_mut(), p.value.data_mut());
        for i in 0..n {
            let g = grad.map_or(T::zero(), |g| g[i]);
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            w[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Parameter<f64> {
        Parameter::new("w", Tensor::scalar(v))
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut ps = vec![p(1.5)];
        ps[0].accumulate_grad(&Tensor::scalar(0.0)).unwrap();
        Adam::default().step(&mut ps).unwrap();
        assert_eq!(ps[0].value.item(), 1.5);
        assert_eq!(ps[0].step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let adam = Adam::new(1e-3, 0.0, 0.99);
        let mut ps = vec![p(0.0)];
        ps[0].accumulate_grad(&Tensor::scalar(2.5)).unwrap();
        adam.step(&mut ps).unwrap();
        let moved = -ps[0].value.item();
        // lr * |g| / (|g| + eps)
        assert!((moved - 1e-3 * 2.5 / (2.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejects_step() {
        let mut ps = vec![p(1.0), p(2.0)];
        ps[0].accumulate_grad(&Tensor::scalar(1.0)).unwrap();
        ps[1].name = "bad".into();
        ps[1].accumulate_grad(&Tensor::scalar(f64::NAN)).unwrap();
        let err = Adam::default().step(&mut ps).unwrap_err();
        assert!(err.to_string().contains("bad"));
        assert_eq!(ps[0].value.item(), 1.0);
        assert_eq!(ps[0].step_count, 0);
    }

    #[test]
    fn accumulation_adds() {
        let mut q = p(0.0);
        q.accumulate_grad(&Tensor::scalar(1.5)).unwrap();
        q.accumulate_grad(&Tensor::scalar(1.5)).unwrap();
        assert_eq!(q.grad.as_ref().unwrap().item(), 3.0);
        q.zero_grad();
        assert!(q.grad.is_none());
    }
}
