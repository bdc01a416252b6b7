use crate::network::ParamRef;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step
/// and matched to parameters by position.
#[derive(Clone, Debug)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [ParamRef<'_, T>]) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            assert_eq!(p.value.shape(), m.shape(), "moment shape mismatch");
            let values = p.value.data_mut();
            let grads = p.grad.data();
            for (((theta, &g), m), v) in values.iter_mut().zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = m.as_f64() / bc1;
                let v_hat = v.as_f64() / bc2;
                *theta -= T::of(c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(grads: &[Vec<f64>], init: Vec<f64>, steps: usize) -> Vec<f64> {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut value = Tensor::new(vec![init.len()], init).unwrap();
        for s in 0..steps {
            let mut grad = Tensor::new(vec![value.len()], grads[s % grads.len()].clone()).unwrap();
            adam.step(&mut [ParamRef {
                value: &mut value,
                grad: &mut grad,
            }]);
        }
        value.into_data()
    }

    #[test]
    fn single_unit_gradient_step_closed_form() {
        let out = run(&[vec![1.0]], vec![0.0], 1);
        // m̂ = v̂ = 1 after bias correction
        let expect = -2e-4 / (1.0 + 1e-8);
        assert!((out[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        assert_eq!(run(&[vec![0.0, 0.0]], vec![1.5, -2.0], 10), vec![1.5, -2.0]);
    }

    #[test]
    fn identical_gradients_identical_updates() {
        let out = run(&[vec![0.3, 0.3], vec![-1.2, -1.2]], vec![0.0, 0.0], 7);
        assert_eq!(out[0], out[1]);
    }
}
