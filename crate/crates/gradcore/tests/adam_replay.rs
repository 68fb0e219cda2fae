use gradcore::{Adam, Parameter64, Tensor64};

/// Minimizes 0.5 * a * (w - c)^2 per coordinate with the optimizer and with
/// a scalar transcription of the update rule.
#[test]
fn ten_steps_on_a_quadratic() {
    let a = [1.0, 3.0, 0.5];
    let c = [2.0, -1.0, 0.25];
    let w0 = [0.0, 0.5, -3.0];
    let (lr, b1, b2, eps) = (0.05, 0.9, 0.99, 1e-8);

    let adam = Adam { lr, beta1: b1, beta2: b2, eps };
    let mut params = vec![Parameter64::new("w", Tensor64::new(vec![3], w0.to_vec()).unwrap())];
    for _ in 0..10 {
        let w = params[0].value.data().to_vec();
        let g: Vec<f64> = (0..3).map(|i| a[i] * (w[i] - c[i])).collect();
        params[0].zero_grad();
        params[0].accumulate_grad(&Tensor64::new(vec![3], g).unwrap()).unwrap();
        adam.step(&mut params).unwrap();
    }

    let mut want = w0;
    for i in 0..3 {
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = a[i] * (want[i] - c[i]);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            want[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    assert_eq!(params[0].step_count, 10);
    for (got, w) in params[0].value.data().iter().zip(want) {
        assert!((got - w).abs() <= 1e-12, "{got} vs {w}");
    }
}

#[test]
fn moments_keep_parameter_shape() {
    let p = Parameter64::new("k", Tensor64::zeros(vec![2, 3, 4]));
    assert_eq!(p.adam_m.shape(), p.value.shape());
    assert_eq!(p.adam_v.shape(), p.value.shape());
}
