use rand::Rng;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;

/// Dense row-major n-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NnError::DataLength { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    /// Zero-mean Gaussian entries with the given standard deviation.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| T::of(std * crate::standard_normal(rng)))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::ShapeMismatch {
                context: "reshape",
                expected: self.shape,
                actual: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.expect_shape(other.shape(), "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }

    /// Copies sample `index` out of a batch tensor (first axis is the batch).
    pub fn sample(&self, index: usize) -> Tensor<T> {
        let per = self.data.len() / self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Tensor {
            shape,
            data: self.data[index * per..(index + 1) * per].to_vec(),
        }
    }

    /// Concatenates equally-shaped tensors along the first axis.
    pub fn stack(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| NnError::InvalidConfig("cannot stack an empty list of tensors".into()))?;
        let mut shape = first.shape.clone();
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for part in parts {
            if part.shape[1..] != first.shape[1..] {
                return Err(NnError::ShapeMismatch {
                    context: "stack",
                    expected: first.shape.clone(),
                    actual: part.shape.clone(),
                });
            }
            data.extend_from_slice(&part.data);
        }
        shape[0] = parts.iter().map(|p| p.shape[0]).sum();
        Ok(Tensor { shape, data })
    }

    pub(crate) fn expect_shape(&self, shape: &[usize], context: &'static str) -> Result<()> {
        if self.shape != shape {
            return Err(NnError::ShapeMismatch {
                context,
                expected: shape.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }
}
