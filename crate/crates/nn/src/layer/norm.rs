use super::{expect_rank, Mode};
use crate::error::{NnError, Result};
use crate::network::ParamRef;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over `(batch, height, width)`.
///
/// Running statistics follow `running = (1 - momentum)·running + momentum·batch`,
/// with the unbiased batch variance; normalization itself uses the biased one.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T: Scalar> {
    pub channels: usize,
    pub momentum: f64,
    pub epsilon: f64,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    grad_gamma: Tensor<T>,
    grad_beta: Tensor<T>,
    cache: Option<Cache<T>>,
}

#[derive(Clone, Debug)]
struct Cache<T> {
    shape: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self::with_config(channels, DEFAULT_MOMENTUM, DEFAULT_EPSILON)
    }

    pub fn with_config(channels: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            channels,
            momentum,
            epsilon,
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            cache: None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        expect_rank(input, 4, "batchnorm2d input")?;
        if input[1] != self.channels {
            return Err(NnError::ShapeMismatch {
                context: "batchnorm2d input",
                expected: vec![input[0], self.channels, input[2], input[3]],
                actual: input.to_vec(),
            });
        }
        Ok(input.to_vec())
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let shape = self.output_shape(input.shape())?;
        let (batch, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
        let count = batch * plane;
        let x = input.data();
        let mut out = Tensor::zeros(&shape);
        let mut x_hat = vec![T::zero(); x.len()];
        let mut inv_stds = vec![T::zero(); c];
        let eps = T::of(self.epsilon);
        for ch in 0..c {
            let indices = (0..batch).flat_map(|b| {
                let start = (b * c + ch) * plane;
                start..start + plane
            });
            let (mean, inv_std) = match mode {
                Mode::Train => {
                    let n = T::of(count as f64);
                    let mean = indices.clone().map(|i| x[i]).sum::<T>() / n;
                    let var = indices.clone().map(|i| (x[i] - mean) * (x[i] - mean)).sum::<T>() / n;
                    let m = T::of(self.momentum);
                    let unbiased = if count > 1 {
                        var * n / T::of((count - 1) as f64)
                    } else {
                        var
                    };
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = (T::one() - m) * *rm + m * mean;
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = (T::one() - m) * *rv + m * unbiased;
                    (mean, T::one() / (var + eps).sqrt())
                }
                Mode::Infer => (
                    self.running_mean.data()[ch],
                    T::one() / (self.running_var.data()[ch] + eps).sqrt(),
                ),
            };
            inv_stds[ch] = inv_std;
            let (g, bt) = (self.gamma.data()[ch], self.beta.data()[ch]);
            for i in indices {
                let h = (x[i] - mean) * inv_std;
                x_hat[i] = h;
                out.data_mut()[i] = g * h + bt;
            }
        }
        self.cache = Some(Cache {
            shape,
            x_hat,
            inv_std: inv_stds,
            batch_stats: mode == Mode::Train,
        });
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache("batchnorm2d"))?;
        upstream.expect_shape(&cache.shape, "batchnorm2d upstream gradient")?;
        let (batch, c, plane) = (cache.shape[0], cache.shape[1], cache.shape[2] * cache.shape[3]);
        let n = T::of((batch * plane) as f64);
        let dy = upstream.data();
        let mut dx = Tensor::zeros(&cache.shape);
        for ch in 0..c {
            let indices = (0..batch).flat_map(|b| {
                let start = (b * c + ch) * plane;
                start..start + plane
            });
            let sum_dy = indices.clone().map(|i| dy[i]).sum::<T>();
            let sum_dy_xhat = indices.clone().map(|i| dy[i] * cache.x_hat[i]).sum::<T>();
            self.grad_beta.data_mut()[ch] += sum_dy;
            self.grad_gamma.data_mut()[ch] += sum_dy_xhat;
            let g = self.gamma.data()[ch];
            let inv_std = cache.inv_std[ch];
            for i in indices {
                dx.data_mut()[i] = if cache.batch_stats {
                    g * inv_std / n * (n * dy[i] - sum_dy - cache.x_hat[i] * sum_dy_xhat)
                } else {
                    g * inv_std * dy[i]
                };
            }
        }
        Ok(dx)
    }

    pub fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        vec![
            ParamRef {
                value: &mut self.gamma,
                grad: &mut self.grad_gamma,
            },
            ParamRef {
                value: &mut self.beta,
                grad: &mut self.grad_beta,
            },
        ]
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
