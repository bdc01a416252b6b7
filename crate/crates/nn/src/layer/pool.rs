use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{expect_rank, Mode};
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Max pooling with floor output size. Ties resolve to the first cell of the
/// window in row-major order.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            cache: None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        expect_rank(input, 4, "maxpool2d input")?;
        if input[2] < self.kernel || input[3] < self.kernel || self.stride == 0 {
            return Err(NnError::ShapeMismatch {
                context: "maxpool2d input",
                expected: vec![input[0], input[1], self.kernel, self.kernel],
                actual: input.to_vec(),
            });
        }
        Ok(vec![
            input[0],
            input[1],
            (input[2] - self.kernel) / self.stride + 1,
            (input[3] - self.kernel) / self.stride + 1,
        ])
    }

    pub fn forward<T: Scalar>(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let shape = self.output_shape(input.shape())?;
        let (h, w) = (input.shape()[2], input.shape()[3]);
        let (oh, ow) = (shape[2], shape[3]);
        let planes = shape[0] * shape[1];
        let x = input.data();
        let mut out = Tensor::zeros(&shape);
        let mut argmax = vec![0usize; out.len()];
        for p in 0..planes {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = p * h * w + oy * self.stride * w + ox * self.stride;
                    for i in 0..self.kernel {
                        for j in 0..self.kernel {
                            let idx = p * h * w + (oy * self.stride + i) * w + ox * self.stride + j;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    let o = (p * oh + oy) * ow + ox;
                    out.data_mut()[o] = x[best];
                    argmax[o] = best;
                }
            }
        }
        self.cache = Some((input.shape().to_vec(), argmax));
        Ok(out)
    }

    pub fn backward<T: Scalar>(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let (in_shape, argmax) = self.cache.as_ref().ok_or(NnError::NoForwardCache("maxpool2d"))?;
        upstream.expect_shape(&self.output_shape(in_shape)?, "maxpool2d upstream gradient")?;
        let mut dx = Tensor::zeros(in_shape);
        for (&src, &g) in argmax.iter().zip(upstream.data()) {
            dx.data_mut()[src] += g;
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Inverted dropout: kept activations are divided by the keep probability in
/// train mode; identity in infer mode.
#[derive(Clone, Debug)]
pub struct Dropout<T: Scalar> {
    pub rate: f64,
    pub seed: u64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
    frozen: bool,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidConfig(format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(Self {
            rate,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
            frozen: false,
        })
    }

    /// While frozen, train-mode forwards reuse the previous mask instead of
    /// drawing a new one. Used by gradient checking.
    pub fn freeze_mask(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Infer {
            self.mask = None;
            return Ok(input.clone());
        }
        let reuse = self.frozen && self.mask.as_ref().is_some_and(|m| m.len() == input.len());
        if !reuse {
            let keep = 1.0 - self.rate;
            let scale = T::of(1.0 / keep);
            let rng = &mut self.rng;
            self.mask = Some(
                (0..input.len())
                    .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                    .collect(),
            );
        }
        let mask = self.mask.as_ref().expect("mask drawn above");
        Ok(Tensor::from_fn(input.shape(), |i| input.data()[i] * mask[i]))
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.mask {
            None => Ok(upstream.clone()),
            Some(mask) if mask.len() == upstream.len() => {
                Ok(Tensor::from_fn(upstream.shape(), |i| upstream.data()[i] * mask[i]))
            }
            Some(mask) => Err(NnError::ShapeMismatch {
                context: "dropout upstream gradient",
                expected: vec![mask.len()],
                actual: upstream.shape().to_vec(),
            }),
        }
    }

    pub fn clear_cache(&mut self) {
        if !self.frozen {
            self.mask = None;
        }
    }
}

/// Collapses every axis after the batch axis.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() < 2 {
            return Err(NnError::ShapeMismatch {
                context: "flatten input",
                expected: vec![0, 0],
                actual: input.to_vec(),
            });
        }
        Ok(vec![input[0], input[1..].iter().product()])
    }

    pub fn forward<T: Scalar>(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let shape = self.output_shape(input.shape())?;
        self.cache = Some(input.shape().to_vec());
        input.clone().reshape(&shape)
    }

    pub fn backward<T: Scalar>(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.cache.as_ref().ok_or(NnError::NoForwardCache("flatten"))?;
        upstream.clone().reshape(shape)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
