use rand::Rng;

use super::{expect_rank, Mode};
use crate::error::{NnError, Result};
use crate::network::ParamRef;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer on `(batch, features)` input: `y = x·Wᵀ + b`.
#[derive(Clone, Debug)]
pub struct Dense<T: Scalar> {
    pub in_features: usize,
    pub out_features: usize,
    /// `(out_features, in_features)`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    grad_weight: Tensor<T>,
    grad_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self::from_parts(
            Tensor::randn(&[out_features, in_features], crate::INIT_STD, rng),
            Tensor::zeros(&[out_features]),
        )
        .expect("consistent shapes")
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let ws = weight.shape().to_vec();
        if ws.len() != 2 || bias.shape() != [ws[0]] {
            return Err(NnError::InvalidConfig(format!(
                "dense weight {ws:?}, bias {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            in_features: ws[1],
            out_features: ws[0],
            grad_weight: Tensor::zeros(&ws),
            grad_bias: Tensor::zeros(&[ws[0]]),
            weight,
            bias,
            input: None,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        expect_rank(input, 2, "dense input")?;
        if input[1] != self.in_features {
            return Err(NnError::ShapeMismatch {
                context: "dense input",
                expected: vec![input[0], self.in_features],
                actual: input.to_vec(),
            });
        }
        Ok(vec![input[0], self.out_features])
    }

    pub fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let shape = self.output_shape(input.shape())?;
        let batch = shape[0];
        let (fi, fo) = (self.in_features, self.out_features);
        let mut out = Tensor::zeros(&shape);
        for row in out.data_mut().chunks_mut(fo) {
            row.copy_from_slice(self.bias.data());
        }
        T::gemm(
            batch,
            fi,
            fo,
            T::one(),
            input.data(),
            (fi as isize, 1),
            self.weight.data(),
            (1, fi as isize),
            T::one(),
            out.data_mut(),
            (fo as isize, 1),
        );
        self.input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.input.as_ref().ok_or(NnError::NoForwardCache("dense"))?;
        let batch = input.shape()[0];
        let (fi, fo) = (self.in_features, self.out_features);
        upstream.expect_shape(&[batch, fo], "dense upstream gradient")?;
        // dW (fo × fi) += dyᵀ (fo × batch) · x (batch × fi)
        T::gemm(
            fo,
            batch,
            fi,
            T::one(),
            upstream.data(),
            (1, fo as isize),
            input.data(),
            (fi as isize, 1),
            T::one(),
            self.grad_weight.data_mut(),
            (fi as isize, 1),
        );
        for row in upstream.data().chunks(fo) {
            for (g, &d) in self.grad_bias.data_mut().iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(input.shape());
        T::gemm(
            batch,
            fo,
            fi,
            T::one(),
            upstream.data(),
            (fo as isize, 1),
            self.weight.data(),
            (fi as isize, 1),
            T::zero(),
            dx.data_mut(),
            (fi as isize, 1),
        );
        Ok(dx)
    }

    pub fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        vec![
            ParamRef {
                value: &mut self.weight,
                grad: &mut self.grad_weight,
            },
            ParamRef {
                value: &mut self.bias,
                grad: &mut self.grad_bias,
            },
        ]
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_is_affine_map() {
        let w = Tensor::new(vec![2, 3], vec![1.0, 0.0, -1.0, 0.5, 2.0, 0.0]).unwrap();
        let b = Tensor::new(vec![2], vec![0.25, -1.0]).unwrap();
        let mut d = Dense::<f64>::from_parts(w, b).unwrap();
        let x = Tensor::new(vec![1, 3], vec![2.0, 1.0, 4.0]).unwrap();
        let y = d.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.data(), &[2.0 - 4.0 + 0.25, 1.0 + 2.0 - 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_parameter_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = Dense::<f64>::new(5, 4, &mut rng);
        let x = Tensor::randn(&[3, 5], 1.0, &mut rng);
        d.forward(&x, Mode::Train).unwrap();
        d.backward(&Tensor::zeros(&[3, 4])).unwrap();
        for p in d.params() {
            assert!(p.grad.data().iter().all(|&g| g == 0.0));
        }
    }
}
