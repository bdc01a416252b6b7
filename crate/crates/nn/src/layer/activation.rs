use super::Mode;
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

macro_rules! elementwise {
    ($name:ident, $label:literal) => {
        impl<T: Scalar> $name<T> {
            pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
                Ok(input.to_vec())
            }

            pub fn clear_cache(&mut self) {
                self.cache = None;
            }

            fn cached(&self, upstream: &Tensor<T>) -> Result<&Tensor<T>> {
                let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache($label))?;
                upstream.expect_shape(cache.shape(), concat!($label, " upstream gradient"))?;
                Ok(cache)
            }
        }
    };
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T: Scalar> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        self.cache = Some(input.clone());
        Ok(input.map(|x| x.max(T::zero())))
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cached(upstream)?;
        Ok(Tensor::from_fn(x.shape(), |i| {
            if x.data()[i] > T::zero() {
                upstream.data()[i]
            } else {
                T::zero()
            }
        }))
    }
}
elementwise!(Relu, "relu");

#[derive(Clone, Debug)]
pub struct LeakyRelu<T: Scalar> {
    pub slope: f64,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        Self { slope, cache: None }
    }

    pub fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let s = T::of(self.slope);
        self.cache = Some(input.clone());
        Ok(input.map(|x| if x > T::zero() { x } else { s * x }))
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let s = T::of(self.slope);
        let x = self.cached(upstream)?;
        Ok(Tensor::from_fn(x.shape(), |i| {
            let g = upstream.data()[i];
            if x.data()[i] > T::zero() {
                g
            } else {
                s * g
            }
        }))
    }
}
elementwise!(LeakyRelu, "leaky_relu");

/// Caches its output, from which the derivative `1 - y²` follows.
#[derive(Clone, Debug, Default)]
pub struct Tanh<T: Scalar> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Tanh<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = input.map(|x| x.tanh());
        self.cache = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cached(upstream)?;
        Ok(Tensor::from_fn(y.shape(), |i| {
            let v = y.data()[i];
            upstream.data()[i] * (T::one() - v * v)
        }))
    }
}
elementwise!(Tanh, "tanh");

/// Caches its output, from which the derivative `y(1 - y)` follows.
#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T: Scalar> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = input.map(|x| {
            // split by sign so exp never overflows
            if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            }
        });
        self.cache = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cached(upstream)?;
        Ok(Tensor::from_fn(y.shape(), |i| {
            let v = y.data()[i];
            upstream.data()[i] * v * (T::one() - v)
        }))
    }
}
elementwise!(Sigmoid, "sigmoid");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_negative_slope() {
        let mut l = LeakyRelu::<f64>::new(0.2);
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = l.forward(&x, Mode::Train).unwrap();
        assert!((y.data()[0] + 0.2).abs() < 1e-15);
        assert_eq!(&y.data()[1..], &[0.0, 2.0]);
    }

    #[test]
    fn relu_passes_gradient_for_positive_inputs() {
        let mut l = Relu::<f64>::new();
        let x = Tensor::new(vec![3], vec![0.5, 1.0, 3.0]).unwrap();
        l.forward(&x, Mode::Train).unwrap();
        let g = Tensor::new(vec![3], vec![0.1, -2.0, 7.0]).unwrap();
        assert_eq!(l.backward(&g).unwrap(), g);
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let x = Tensor::<f64>::zeros(&[2]);
        assert_eq!(Sigmoid::new().forward(&x, Mode::Infer).unwrap().data(), &[0.5, 0.5]);
        assert_eq!(Tanh::new().forward(&x, Mode::Infer).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn sigmoid_is_finite_for_extreme_inputs() {
        let x = Tensor::<f32>::new(vec![2], vec![-1000.0, 1000.0]).unwrap();
        let y = Sigmoid::new().forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0]);
    }
}
