//! Layer set and enum dispatch.
//!
//! Every layer consumes a batch-first tensor, caches whatever its backward
//! pass needs, and accumulates parameter gradients across backward calls
//! until [`Layer::zero_grad`] is called.

mod activation;
mod conv;
mod dense;
mod norm;
mod pool;

pub use activation::{LeakyRelu, Relu, Sigmoid, Tanh};
pub use conv::Conv2d;
pub use dense::Dense;
pub use norm::BatchNorm2d;
pub use pool::{Dropout, Flatten, MaxPool2d};

use crate::error::Result;
use crate::network::ParamRef;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Train mode uses batch statistics and active dropout; infer mode uses
/// running statistics and disables dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Discriminant of [`Layer`], also used as the checkpoint tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum LayerKind {
    Conv2d = 1,
    BatchNorm2d = 2,
    Dense = 3,
    Relu = 4,
    LeakyRelu = 5,
    Tanh = 6,
    Sigmoid = 7,
    MaxPool2d = 8,
    Dropout = 9,
    Flatten = 10,
}

impl LayerKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        use LayerKind::*;
        Some(match tag {
            1 => Conv2d,
            2 => BatchNorm2d,
            3 => Dense,
            4 => Relu,
            5 => LeakyRelu,
            6 => Tanh,
            7 => Sigmoid,
            8 => MaxPool2d,
            9 => Dropout,
            10 => Flatten,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use LayerKind::*;
        match self {
            Conv2d => "conv2d",
            BatchNorm2d => "batchnorm2d",
            Dense => "dense",
            Relu => "relu",
            LeakyRelu => "leaky_relu",
            Tanh => "tanh",
            Sigmoid => "sigmoid",
            MaxPool2d => "maxpool2d",
            Dropout => "dropout",
            Flatten => "flatten",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T: Scalar> {
    Conv2d(Conv2d<T>),
    BatchNorm2d(BatchNorm2d<T>),
    Dense(Dense<T>),
    Relu(Relu<T>),
    LeakyRelu(LeakyRelu<T>),
    Tanh(Tanh<T>),
    Sigmoid(Sigmoid<T>),
    MaxPool2d(MaxPool2d),
    Dropout(Dropout<T>),
    Flatten(Flatten),
}

macro_rules! dispatch {
    ($self:expr, $l:ident => $body:expr) => {
        match $self {
            Layer::Conv2d($l) => $body,
            Layer::BatchNorm2d($l) => $body,
            Layer::Dense($l) => $body,
            Layer::Relu($l) => $body,
            Layer::LeakyRelu($l) => $body,
            Layer::Tanh($l) => $body,
            Layer::Sigmoid($l) => $body,
            Layer::MaxPool2d($l) => $body,
            Layer::Dropout($l) => $body,
            Layer::Flatten($l) => $body,
        }
    };
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::BatchNorm2d(_) => LayerKind::BatchNorm2d,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::LeakyRelu(_) => LayerKind::LeakyRelu,
            Layer::Tanh(_) => LayerKind::Tanh,
            Layer::Sigmoid(_) => LayerKind::Sigmoid,
            Layer::MaxPool2d(_) => LayerKind::MaxPool2d,
            Layer::Dropout(_) => LayerKind::Dropout,
            Layer::Flatten(_) => LayerKind::Flatten,
        }
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        dispatch!(self, l => l.forward(input, mode))
    }

    /// Returns the gradient with respect to the last forward input.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        dispatch!(self, l => l.backward(upstream))
    }

    /// Shape the layer would produce for `input` (batch axis included).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        dispatch!(self, l => l.output_shape(input))
    }

    pub fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        match self {
            Layer::Conv2d(l) => l.params(),
            Layer::BatchNorm2d(l) => l.params(),
            Layer::Dense(l) => l.params(),
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params() {
            p.grad.fill(T::zero());
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        dispatch!(self, l => l.clear_cache())
    }
}

/// Rejects inputs whose rank differs from `rank` or that have an empty axis.
pub(crate) fn expect_rank(input: &[usize], rank: usize, context: &'static str) -> Result<()> {
    if input.len() != rank || input.contains(&0) {
        return Err(crate::NnError::ShapeMismatch {
            context,
            expected: vec![0; rank],
            actual: input.to_vec(),
        });
    }
    Ok(())
}
