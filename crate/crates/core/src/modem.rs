//! Probe symbol mapping and the discrete Heisenberg/Wigner transforms.
//!
//! The continuous-time frame is critically sampled at `B = M·Δf`, giving `M`
//! samples per symbol slot and `M·N` per frame. Sample `q = n·M + i` is
//! intra-symbol sample `i` of slot `n`. With rectangular pulses at both ends
//! the transforms reduce to per-slot unitary (I)DFTs across subcarriers.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{DdMatrix, FrameParams, TfMatrix};
use crate::rng::seeded;

/// Transmit/receive pulse. Only the rectangular pulse of one symbol
/// duration is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PulseShape {
    #[default]
    Rectangular,
}

/// Discrete time-domain frame of `M·N` complex baseband samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFrame {
    samples: Vec<Complex64>,
}

impl TimeFrame {
    pub fn new(p: &FrameParams, samples: Vec<Complex64>) -> Result<Self> {
        let frame = Self { samples };
        frame.conforms(p)?;
        Ok(frame)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Mean power per sample.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub(crate) fn from_samples_unchecked(samples: Vec<Complex64>) -> Self {
        Self { samples }
    }

    pub fn conforms(&self, p: &FrameParams) -> Result<()> {
        if self.samples.len() != p.cells() {
            return Err(Error::DimensionMismatch {
                context: "time frame length (M·N)",
                expected: p.cells(),
                actual: self.samples.len(),
            });
        }
        if self.samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParams("time frame samples must be finite".into()));
        }
        Ok(())
    }
}

/// Unit-power QPSK symbols `(±1 ± j)/√2` on every DD cell, drawn uniformly
/// from a ChaCha8 stream seeded with `seed`.
pub fn map_probe_symbols(p: &FrameParams, seed: u64) -> DdMatrix {
    let mut rng = seeded(seed);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    DdMatrix::from_fn(p, |_, _| {
        let bits: u8 = rng.gen_range(0..4);
        let re = if bits & 1 == 0 { a } else { -a };
        let im = if bits & 2 == 0 { a } else { -a };
        Complex64::new(re, im)
    })
}

/// `x[n·M + i] = 1/√M Σ_m A_TF[n,m] e^{j2π m i / M}`
pub fn heisenberg_modulate(tf: &TfMatrix, p: &FrameParams) -> Result<TimeFrame> {
    tf.conforms(p)?;
    let mut samples = tf.as_slice().to_vec();
    FftPlanner::new().plan_fft_inverse(p.m).process(&mut samples);
    let scale = 1.0 / (p.m as f64).sqrt();
    samples.iter_mut().for_each(|z| *z *= scale);
    Ok(TimeFrame { samples })
}

/// `B_TF[n,m] = 1/√M Σ_i r[n·M + i] e^{−j2π m i / M}`
pub fn wigner_demodulate(r: &TimeFrame, p: &FrameParams) -> Result<TfMatrix> {
    r.conforms(p)?;
    let mut data = r.samples.clone();
    FftPlanner::new().plan_fft_forward(p.m).process(&mut data);
    let scale = 1.0 / (p.m as f64).sqrt();
    data.iter_mut().for_each(|z| *z *= scale);
    TfMatrix::from_vec(p, data)
}
