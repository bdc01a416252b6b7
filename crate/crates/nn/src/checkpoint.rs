//! Binary checkpoint container.
//!
//! ```text
//! magic     8 bytes  "OTFSNN1\0"
//! version   u8       (1)
//! epoch     u32
//! layers    u32
//! per layer:
//!   kind    u8       LayerKind tag
//!   nconfig u32, then nconfig × u32 configuration words
//!   ntensor u32, then per tensor: ndim u32, dims ndim × u32, data f32 × prod(dims)
//! ```
//!
//! All integers and floats are little-endian. Real-valued configuration
//! (slopes, rates, momentum) is stored as the two 32-bit halves of the f64
//! bit pattern, low word first.

use std::io::{ErrorKind, Read, Write};

use crate::error::{NnError, Result};
use crate::layer::{
    BatchNorm2d, Conv2d, Dense, Dropout, Flatten, Layer, LayerKind, LeakyRelu, MaxPool2d, Relu, Sigmoid, Tanh,
};
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 8] = *b"OTFSNN1\0";
pub const VERSION: u8 = 1;

fn split_f64(x: f64) -> [u32; 2] {
    let bits = x.to_bits();
    [bits as u32, (bits >> 32) as u32]
}

fn join_f64(lo: u32, hi: u32) -> f64 {
    f64::from_bits(u64::from(lo) | (u64::from(hi) << 32))
}

fn layer_config<T: Scalar>(layer: &Layer<T>) -> Vec<u32> {
    match layer {
        Layer::Conv2d(c) => vec![
            c.in_channels as u32,
            c.out_channels as u32,
            c.kernel.0 as u32,
            c.kernel.1 as u32,
            c.stride as u32,
            c.padding as u32,
        ],
        Layer::BatchNorm2d(b) => {
            let mut v = vec![b.channels as u32];
            v.extend(split_f64(b.momentum));
            v.extend(split_f64(b.epsilon));
            v
        }
        Layer::Dense(d) => vec![d.in_features as u32, d.out_features as u32],
        Layer::LeakyRelu(l) => split_f64(l.slope).to_vec(),
        Layer::MaxPool2d(p) => vec![p.kernel as u32, p.stride as u32],
        Layer::Dropout(d) => {
            let mut v = split_f64(d.rate).to_vec();
            v.extend([d.seed as u32, (d.seed >> 32) as u32]);
            v
        }
        Layer::Relu(_) | Layer::Tanh(_) | Layer::Sigmoid(_) | Layer::Flatten(_) => Vec::new(),
    }
}

fn layer_tensors<T: Scalar>(layer: &Layer<T>) -> Vec<&Tensor<T>> {
    match layer {
        Layer::Conv2d(c) => vec![&c.weight, &c.bias],
        Layer::BatchNorm2d(b) => vec![&b.gamma, &b.beta, &b.running_mean, &b.running_var],
        Layer::Dense(d) => vec![&d.weight, &d.bias],
        _ => Vec::new(),
    }
}

/// Serializes `net` with the given epoch counter; parameters are narrowed to f32.
pub fn write_network<T: Scalar, W: Write>(mut w: W, net: &Network<T>, epoch: u32) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&epoch.to_le_bytes())?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for layer in net.layers() {
        w.write_all(&[layer.kind() as u8])?;
        let config = layer_config(layer);
        w.write_all(&(config.len() as u32).to_le_bytes())?;
        for c in config {
            w.write_all(&c.to_le_bytes())?;
        }
        let tensors = layer_tensors(layer);
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for t in tensors {
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(4 * t.len());
            for &x in t.data() {
                buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => NnError::Truncated,
            _ => NnError::Io(e),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn tensor<T: Scalar>(&mut self) -> Result<Tensor<T>> {
        let ndim = self.u32()? as usize;
        if ndim > 8 {
            return Err(NnError::InvalidConfig(format!("tensor rank {ndim}")));
        }
        let shape = (0..ndim)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * len];
        self.inner.read_exact(&mut raw).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => NnError::Truncated,
            _ => NnError::Io(e),
        })?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        Tensor::new(shape, data)
    }
}

fn expect_len(kind: LayerKind, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(NnError::InvalidConfig(format!(
            "{}: expected {want} entries, found {got}",
            kind.name()
        )));
    }
    Ok(())
}

/// Reads a network and its epoch counter.
pub fn read_network<T: Scalar, R: Read>(r: R) -> Result<(Network<T>, u32)> {
    let mut r = Reader { inner: r };
    if r.bytes::<8>()? != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let epoch = r.u32()?;
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let tag = r.u8()?;
        let kind = LayerKind::from_tag(tag).ok_or(NnError::UnknownLayer(tag))?;
        let nconfig = r.u32()? as usize;
        if nconfig > 64 {
            return Err(NnError::InvalidConfig(format!(
                "{} config length {nconfig}",
                kind.name()
            )));
        }
        let cfg = (0..nconfig).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let ntensors = r.u32()? as usize;
        if ntensors > 8 {
            return Err(NnError::InvalidConfig(format!(
                "{} tensor count {ntensors}",
                kind.name()
            )));
        }
        let mut tensors = (0..ntensors)
            .map(|_| r.tensor::<T>())
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let layer = match kind {
            LayerKind::Conv2d => {
                expect_len(kind, cfg.len(), 6)?;
                expect_len(kind, tensors.len(), 2)?;
                let conv = Conv2d::from_parts(
                    tensors.next().expect("length checked"),
                    tensors.next().expect("length checked"),
                    cfg[4] as usize,
                    cfg[5] as usize,
                )?;
                let declared = [cfg[0], cfg[1], cfg[2], cfg[3]].map(|v| v as usize);
                if declared != [conv.in_channels, conv.out_channels, conv.kernel.0, conv.kernel.1] {
                    return Err(NnError::InvalidConfig(
                        "conv2d configuration disagrees with weight shape".into(),
                    ));
                }
                Layer::Conv2d(conv)
            }
            LayerKind::BatchNorm2d => {
                expect_len(kind, cfg.len(), 5)?;
                expect_len(kind, tensors.len(), 4)?;
                let channels = cfg[0] as usize;
                let mut bn = BatchNorm2d::with_config(channels, join_f64(cfg[1], cfg[2]), join_f64(cfg[3], cfg[4]));
                for slot in [&mut bn.gamma, &mut bn.beta, &mut bn.running_mean, &mut bn.running_var] {
                    let t = tensors.next().expect("length checked");
                    t.expect_shape(&[channels], "batchnorm2d checkpoint tensor")?;
                    *slot = t;
                }
                Layer::BatchNorm2d(bn)
            }
            LayerKind::Dense => {
                expect_len(kind, cfg.len(), 2)?;
                expect_len(kind, tensors.len(), 2)?;
                let dense = Dense::from_parts(
                    tensors.next().expect("length checked"),
                    tensors.next().expect("length checked"),
                )?;
                if [cfg[0] as usize, cfg[1] as usize] != [dense.in_features, dense.out_features] {
                    return Err(NnError::InvalidConfig(
                        "dense configuration disagrees with weight shape".into(),
                    ));
                }
                Layer::Dense(dense)
            }
            LayerKind::LeakyRelu => {
                expect_len(kind, cfg.len(), 2)?;
                Layer::LeakyRelu(LeakyRelu::new(join_f64(cfg[0], cfg[1])))
            }
            LayerKind::MaxPool2d => {
                expect_len(kind, cfg.len(), 2)?;
                Layer::MaxPool2d(MaxPool2d::new(cfg[0] as usize, cfg[1] as usize))
            }
            LayerKind::Dropout => {
                expect_len(kind, cfg.len(), 4)?;
                let seed = u64::from(cfg[2]) | (u64::from(cfg[3]) << 32);
                Layer::Dropout(Dropout::new(join_f64(cfg[0], cfg[1]), seed)?)
            }
            LayerKind::Relu => Layer::Relu(Relu::new()),
            LayerKind::Tanh => Layer::Tanh(Tanh::new()),
            LayerKind::Sigmoid => Layer::Sigmoid(Sigmoid::new()),
            LayerKind::Flatten => Layer::Flatten(Flatten::new()),
        };
        layers.push(layer);
    }
    Ok((Network::new(layers), epoch))
}
