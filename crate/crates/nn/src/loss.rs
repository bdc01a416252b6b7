use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Predictions are clamped to `[ε, 1 − ε]` before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `pred`.
pub fn bce_loss<T: Scalar>(pred: &Tensor<T>, label: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    label.expect_shape(pred.shape(), "bce label")?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = Tensor::from_fn(pred.shape(), |i| {
        let p = pred.data()[i].as_f64().clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        let y = label.data()[i].as_f64();
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        T::of((p - y) / (p * (1.0 - p)) / n)
    });
    Ok((T::of(loss / n), grad))
}

/// Mean squared error and its gradient `2(pred − label)/n`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, label: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != label.shape() {
        return Err(NnError::ShapeMismatch {
            context: "mse label",
            expected: pred.shape().to_vec(),
            actual: label.shape().to_vec(),
        });
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = Tensor::from_fn(pred.shape(), |i| {
        let d = pred.data()[i].as_f64() - label.data()[i].as_f64();
        loss += d * d;
        T::of(2.0 * d / n)
    });
    Ok((T::of(loss / n), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn bce_closed_forms() {
        let (l, _) = bce_loss(&t(&[0.5]), &t(&[1.0])).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let (l, _) = bce_loss(&t(&[1.0, 0.0]), &t(&[1.0, 0.0])).unwrap();
        assert!(l <= -(1.0 - BCE_EPSILON).ln() + 1e-18);
    }

    #[test]
    fn mse_closed_forms() {
        assert_eq!(mse_loss(&t(&[1.0, 2.0]), &t(&[1.0, 2.0])).unwrap().0, 0.0);
        assert_eq!(mse_loss(&t(&[2.0, 3.0, 0.0]), &t(&[1.0, 2.0, -1.0])).unwrap().0, 1.0);
        assert!(mse_loss(&t(&[1.0]), &t(&[1.0, 2.0])).is_err());
    }

    fn fd_check(f: impl Fn(&Tensor<f64>) -> (f64, Tensor<f64>), x: Tensor<f64>) {
        let (_, g) = f(&x);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let num = (f(&xp).0 - f(&xm).0) / (2.0 * h);
            let a = g.data()[i];
            assert!((a - num).abs() / a.abs().max(num.abs()) < 1e-6, "{a} vs {num}");
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let y = t(&[1.0, 0.0, 1.0, 0.0]);
        fd_check(|p| bce_loss(p, &y).unwrap(), t(&[0.3, 0.8, 0.95, 0.1]));
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let y = t(&[0.5, -1.0, 2.0]);
        fd_check(|p| mse_loss(p, &y).unwrap(), t(&[1.5, 0.25, -0.75]));
    }
}
