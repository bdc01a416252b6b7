use rand::Rng;

use super::{expect_rank, Mode};
use crate::error::{NnError, Result};
use crate::network::ParamRef;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2D convolution (cross-correlation) over NCHW input with zero padding.
///
/// Implemented as im2col followed by a GEMM per batch sample.
#[derive(Clone, Debug)]
pub struct Conv2d<T: Scalar> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    /// `(out_channels, in_channels, kh, kw)`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    grad_weight: Tensor<T>,
    grad_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

/// Spatial geometry of one forward call.
#[derive(Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let l = g.out_len();
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * l;
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + i) as isize - g.padding as isize;
                    let dst = &mut cols[row + oy * g.out_w..row + (oy + 1) * g.out_w];
                    if y < 0 || y >= g.height as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let xx = (ox * g.stride + j) as isize - g.padding as isize;
                        *d = if xx < 0 || xx >= g.width as isize {
                            T::zero()
                        } else {
                            src[xx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry, dx: &mut [T]) {
    let l = g.out_len();
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * l;
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + i) as isize - g.padding as isize;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let src = &cols[row + oy * g.out_w..row + (oy + 1) * g.out_w];
                    let dst = &mut plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for (ox, &v) in src.iter().enumerate() {
                        let xx = (ox * g.stride + j) as isize - g.padding as isize;
                        if xx >= 0 && xx < g.width as isize {
                            dst[xx as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    /// Square kernel; weights ~ N(0, 0.02²), zero bias.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel, kernel];
        Self::from_parts(
            Tensor::randn(&shape, crate::INIT_STD, rng),
            Tensor::zeros(&[out_channels]),
            stride,
            padding,
        )
        .expect("consistent shapes")
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let ws = weight.shape().to_vec();
        if ws.len() != 4 || bias.shape() != [ws[0]] || stride == 0 {
            return Err(NnError::InvalidConfig(format!(
                "conv2d weight {ws:?}, bias {:?}, stride {stride}",
                bias.shape()
            )));
        }
        Ok(Self {
            in_channels: ws[1],
            out_channels: ws[0],
            kernel: (ws[2], ws[3]),
            stride,
            padding,
            grad_weight: Tensor::zeros(&ws),
            grad_bias: Tensor::zeros(&[ws[0]]),
            weight,
            bias,
            input: None,
        })
    }

    fn geometry(&self, input: &[usize]) -> Result<Geometry> {
        expect_rank(input, 4, "conv2d input")?;
        let (kh, kw) = self.kernel;
        let (h, w) = (input[2] + 2 * self.padding, input[3] + 2 * self.padding);
        if input[1] != self.in_channels || h < kh || w < kw {
            return Err(NnError::ShapeMismatch {
                context: "conv2d input",
                expected: vec![input[0], self.in_channels, kh.max(input[2]), kw.max(input[3])],
                actual: input.to_vec(),
            });
        }
        Ok(Geometry {
            channels: self.in_channels,
            height: input[2],
            width: input[3],
            out_h: (h - kh) / self.stride + 1,
            out_w: (w - kw) / self.stride + 1,
            kh,
            kw,
            stride: self.stride,
            padding: self.padding,
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let g = self.geometry(input)?;
        Ok(vec![input[0], self.out_channels, g.out_h, g.out_w])
    }

    pub fn forward(&mut self, input: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let g = self.geometry(input.shape())?;
        let batch = input.shape()[0];
        let (k, l) = (g.patch_len(), g.out_len());
        let in_per = g.channels * g.height * g.width;
        let out_per = self.out_channels * l;
        let mut out = Tensor::zeros(&[batch, self.out_channels, g.out_h, g.out_w]);
        let mut cols = vec![T::zero(); k * l];
        for b in 0..batch {
            im2col(&input.data()[b * in_per..(b + 1) * in_per], &g, &mut cols);
            let dst = &mut out.data_mut()[b * out_per..(b + 1) * out_per];
            for (oc, row) in dst.chunks_mut(l).enumerate() {
                row.fill(self.bias.data()[oc]);
            }
            T::gemm(
                self.out_channels,
                k,
                l,
                T::one(),
                self.weight.data(),
                (k as isize, 1),
                &cols,
                (l as isize, 1),
                T::one(),
                dst,
                (l as isize, 1),
            );
        }
        self.input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.input.as_ref().ok_or(NnError::NoForwardCache("conv2d"))?;
        let g = self.geometry(input.shape())?;
        let batch = input.shape()[0];
        upstream.expect_shape(
            &[batch, self.out_channels, g.out_h, g.out_w],
            "conv2d upstream gradient",
        )?;
        let (k, l) = (g.patch_len(), g.out_len());
        let in_per = g.channels * g.height * g.width;
        let out_per = self.out_channels * l;
        let mut dx = Tensor::zeros(input.shape());
        let mut cols = vec![T::zero(); k * l];
        let mut dcols = vec![T::zero(); k * l];
        for b in 0..batch {
            let dy = &upstream.data()[b * out_per..(b + 1) * out_per];
            im2col(&input.data()[b * in_per..(b + 1) * in_per], &g, &mut cols);
            // dW (oc × k) += dy (oc × l) · colsᵀ (l × k)
            T::gemm(
                self.out_channels,
                l,
                k,
                T::one(),
                dy,
                (l as isize, 1),
                &cols,
                (1, l as isize),
                T::one(),
                self.grad_weight.data_mut(),
                (k as isize, 1),
            );
            for (oc, row) in dy.chunks(l).enumerate() {
                self.grad_bias.data_mut()[oc] += row.iter().copied().sum::<T>();
            }
            // dcols (k × l) = Wᵀ (k × oc) · dy (oc × l)
            T::gemm(
                k,
                self.out_channels,
                l,
                T::one(),
                self.weight.data(),
                (1, k as isize),
                dy,
                (l as isize, 1),
                T::zero(),
                &mut dcols,
                (l as isize, 1),
            );
            col2im(&dcols, &g, &mut dx.data_mut()[b * in_per..(b + 1) * in_per]);
        }
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

    /// Sliding-window reference, written independently of im2col.
    fn naive_conv(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
        let s = x.shape();
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (kh, kw) = conv.kernel;
        let p = conv.padding as isize;
        let oh = (h + 2 * conv.padding - kh) / conv.stride + 1;
        let ow = (w + 2 * conv.padding - kw) / conv.stride + 1;
        let oc = conv.out_channels;
        let mut out = Tensor::zeros(&[b, oc, oh, ow]);
        for n in 0..b {
            for o in 0..oc {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = conv.bias.data()[o];
                        for ci in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let iy = (y * conv.stride + i) as isize - p;
                                    let ix = (xx * conv.stride + j) as isize - p;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((n * c + ci) * h + iy as usize) * w + ix as usize];
                                    let wv = conv.weight.data()[((o * c + ci) * kh + i) * kw + j];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out.data_mut()[((n * oc + o) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn centered_delta_kernel_is_identity() {
        let mut w = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let mut conv = Conv2d::from_parts(w, Tensor::zeros(&[1]), 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::randn(&[1, 1, 5, 5], 1.0, &mut rng);
        let y = conv.forward(&x, Mode::Train).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_sliding_window_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, stride, pad, h, w) in &[(3, 1, 1, 7, 6), (4, 2, 1, 9, 8), (3, 2, 1, 7, 7), (2, 1, 0, 5, 4)] {
            let mut conv = Conv2d::<f64>::new(3, 4, k, stride, pad, &mut rng);
            conv.bias = Tensor::randn(&[4], 1.0, &mut rng);
            conv.weight = Tensor::randn(&[4, 3, k, k], 1.0, &mut rng);
            let x = Tensor::randn(&[2, 3, h, w], 1.0, &mut rng);
            let fast = conv.forward(&x, Mode::Train).unwrap();
            let slow = naive_conv(&x, &conv);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn output_size_uses_floor_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::<f32>::new(128, 256, 3, 2, 1, &mut rng);
        assert_eq!(conv.output_shape(&[1, 128, 7, 7]).unwrap(), vec![1, 256, 4, 4]);
        let conv = Conv2d::<f32>::new(1, 64, 4, 2, 1, &mut rng);
        assert_eq!(conv.output_shape(&[1, 1, 28, 28]).unwrap(), vec![1, 64, 14, 14]);
    }

    #[test]
    fn wrong_channel_count_reports_both_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::<f32>::new(2, 4, 3, 1, 1, &mut rng);
        let err = conv.forward(&Tensor::zeros(&[1, 3, 5, 5]), Mode::Train).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 5, 5]") && msg.contains("[1, 3, 5, 5]"), "{msg}");
    }

    #[test]
    fn backward_without_forward_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::<f32>::new(1, 1, 3, 1, 1, &mut rng);
        assert!(matches!(
            conv.backward(&Tensor::zeros(&[1, 1, 4, 4])),
            Err(NnError::NoForwardCache(_))
        ));
    }
}
