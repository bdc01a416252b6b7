use crate::error::Result;
use crate::layer::{Layer, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mutable view of one parameter tensor and its accumulated gradient.
pub struct ParamRef<'a, T: Scalar> {
    pub value: &'a mut Tensor<T>,
    pub grad: &'a mut Tensor<T>,
}

/// A feed-forward stack of layers.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    layers: Vec<Layer<T>>,
    mode: Mode,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self {
            layers,
            mode: Mode::Train,
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mode = self.mode;
        let mut x = self
            .layers
            .first_mut()
            .map_or_else(|| Ok(input.clone()), |l| l.forward(input, mode))?;
        for layer in self.layers.iter_mut().skip(1) {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    /// Backpropagates through every layer; returns the input gradient.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Output shape after every layer, starting with `input` itself.
    pub fn shape_trace(&self, input: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut trace = vec![input.to_vec()];
        for layer in &self.layers {
            let next = layer.output_shape(trace.last().expect("non-empty"))?;
            trace.push(next);
        }
        Ok(trace)
    }

    /// Parameters in a fixed layer-major order.
    pub fn params(&mut self) -> Vec<ParamRef<'_, T>> {
        self.layers.iter_mut().flat_map(|l| l.params()).collect()
    }

    pub fn param_count(&mut self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn freeze_dropout(&mut self, frozen: bool) {
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                d.freeze_mask(frozen);
            }
        }
    }

    /// All parameters and batch-norm running statistics are finite.
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::Conv2d(c) => c.weight.is_finite() && c.bias.is_finite(),
            Layer::Dense(d) => d.weight.is_finite() && d.bias.is_finite(),
            Layer::BatchNorm2d(b) => {
                b.gamma.is_finite() && b.beta.is_finite() && b.running_mean.is_finite() && b.running_var.is_finite()
            }
            _ => true,
        })
    }

    /// Sets every parameter to zero; batch-norm running statistics are untouched.
    pub fn zero_params(&mut self) {
        for p in self.params() {
            p.value.fill(T::zero());
        }
    }
}
