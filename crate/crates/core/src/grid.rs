//! Frame geometry, the symplectic finite Fourier transforms between the
//! delay-Doppler (DD) and time-frequency (TF) grids, and index to physical
//! unit conversion.
//!
//! Both grids are stored row-major with `N` rows and `M` columns. For a DD
//! matrix the row is the Doppler index `k` and the column the delay index
//! `l`; for a TF matrix the row is the time slot `n` and the column the
//! subcarrier `m`.

use std::marker::PhantomData;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Propagation speed used for every range/velocity conversion.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameParams {
    /// Subcarriers (delay bins).
    pub m: usize,
    /// Time slots (Doppler bins).
    pub n: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
}

impl FrameParams {
    pub fn new(m: usize, n: usize, delta_f: f64, f_c: f64) -> Result<Self> {
        let p = Self { m, n, delta_f, f_c };
        p.validate()?;
        Ok(p)
    }

    /// 28×28 grid, 150 kHz spacing, 60 GHz carrier.
    pub fn paper() -> Self {
        Self {
            m: 28,
            n: 28,
            delta_f: 150e3,
            f_c: 60e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidParams(format!("M={} N={} must be ≥ 1", self.m, self.n)));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::InvalidParams(format!("delta_f={} must be > 0", self.delta_f)));
        }
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::InvalidParams(format!("f_c={} must be > 0", self.f_c)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.m * self.n
    }

    /// Symbol duration `T = 1/Δf`.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// `B = M·Δf`.
    pub fn bandwidth(&self) -> f64 {
        self.m as f64 * self.delta_f
    }

    pub fn frame_duration(&self) -> f64 {
        self.n as f64 * self.symbol_duration()
    }

    /// `c / 2B`
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }

    /// `B·c / (2·M·N·f_c)`
    pub fn velocity_resolution(&self) -> f64 {
        self.bandwidth() * SPEED_OF_LIGHT / (2.0 * (self.m * self.n) as f64 * self.f_c)
    }

    /// `c·T / 2`
    pub fn max_range(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.delta_f)
    }

    /// `c·Δf / (2·f_c)`
    pub fn max_velocity(&self) -> f64 {
        SPEED_OF_LIGHT * self.delta_f / (2.0 * self.f_c)
    }

    /// Converts (possibly fractional) delay and Doppler indices to range in
    /// metres and radial velocity in m/s.
    ///
    /// With `τ = l/(M·Δf) = 2R/c` and `ν = k/(N·T) = 2·f_c·V/c` this is one
    /// resolution cell per index step.
    pub fn index_to_physical(&self, delay: f64, doppler: f64) -> (f64, f64) {
        (delay * self.range_resolution(), doppler * self.velocity_resolution())
    }
}

/// Marker for delay-Doppler matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelayDoppler;

/// Marker for time-frequency matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeFrequency;

/// `N × M` complex matrix in one of the two domains.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<D> {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    domain: PhantomData<D>,
}

pub type DdMatrix = Matrix<DelayDoppler>;
pub type TfMatrix = Matrix<TimeFrequency>;

impl<D> Matrix<D> {
    pub fn zeros(p: &FrameParams) -> Self {
        Self::from_vec(p, vec![Complex64::new(0.0, 0.0); p.cells()]).expect("sized from params")
    }

    pub fn from_vec(p: &FrameParams, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != p.cells() {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: p.cells(),
                actual: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParams("matrix entries must be finite".into()));
        }
        Ok(Self {
            rows: p.n,
            cols: p.m,
            data,
            domain: PhantomData,
        })
    }

    pub fn from_fn(p: &FrameParams, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let data = (0..p.n)
            .flat_map(|r| (0..p.m).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self {
            rows: p.n,
            cols: p.m,
            data,
            domain: PhantomData,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn conforms(&self, p: &FrameParams) -> Result<()> {
        if self.rows != p.n || self.cols != p.m {
            return Err(Error::DimensionMismatch {
                context: "matrix shape (N·M)",
                expected: p.cells(),
                actual: self.rows * self.cols,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    /// `Σ x e^{-j2π…}`
    Forward,
    /// `Σ x e^{+j2π…}`, unscaled
    Inverse,
}

fn fft_rows(data: &mut [Complex64], cols: usize, dir: Direction) {
    let mut planner = FftPlanner::new();
    let fft = match dir {
        Direction::Forward => planner.plan_fft_forward(cols),
        Direction::Inverse => planner.plan_fft_inverse(cols),
    };
    fft.process(data);
}

fn fft_cols(data: &mut [Complex64], rows: usize, cols: usize, dir: Direction) {
    let mut planner = FftPlanner::new();
    let fft = match dir {
        Direction::Forward => planner.plan_fft_forward(rows),
        Direction::Inverse => planner.plan_fft_inverse(rows),
    };
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for (r, v) in column.iter_mut().enumerate() {
            *v = data[r * cols + c];
        }
        fft.process(&mut column);
        for (r, v) in column.iter().enumerate() {
            data[r * cols + c] = *v;
        }
    }
}

/// Inverse symplectic finite Fourier transform, DD → TF:
///
/// `A_TF[n,m] = 1/√(NM) Σ_k Σ_l A_DD[k,l] e^{j2π(nk/N − ml/M)}`
///
/// i.e. an inverse DFT down the Doppler axis and a forward DFT along the
/// delay axis.
pub fn isfft(dd: &DdMatrix, p: &FrameParams) -> Result<TfMatrix> {
    dd.conforms(p)?;
    let mut data = dd.as_slice().to_vec();
    fft_rows(&mut data, p.m, Direction::Forward);
    fft_cols(&mut data, p.n, p.m, Direction::Inverse);
    let scale = 1.0 / (p.cells() as f64).sqrt();
    data.iter_mut().for_each(|z| *z *= scale);
    Matrix::from_vec(p, data)
}

/// Symplectic finite Fourier transform, TF → DD:
///
/// `B_DD[k,l] = 1/√(NM) Σ_n Σ_m B_TF[n,m] e^{−j2π(nk/N − ml/M)}`
pub fn sfft(tf: &TfMatrix, p: &FrameParams) -> Result<DdMatrix> {
    tf.conforms(p)?;
    let mut data = tf.as_slice().to_vec();
    fft_rows(&mut data, p.m, Direction::Inverse);
    fft_cols(&mut data, p.n, p.m, Direction::Forward);
    let scale = 1.0 / (p.cells() as f64).sqrt();
    data.iter_mut().for_each(|z| *z *= scale);
    Matrix::from_vec(p, data)
}
