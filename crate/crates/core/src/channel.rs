//! Point-target delay-Doppler channel and calibrated AWGN.

use num_complex::Complex64;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::grid::FrameParams;
use crate::modem::TimeFrame;
use crate::rng::{gaussian_pair, seeded, sub_seed};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    /// Integer delay index `l_p ∈ [0, M)`.
    pub delay: usize,
    /// Integer Doppler index `k_p ∈ [0, N)`.
    pub doppler: usize,
    pub gain: Complex64,
}

/// Non-empty set of targets on distinct grid cells, ordered ascending by
/// `(delay, doppler)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet {
    targets: Vec<Target>,
}

impl TargetSet {
    /// Validates bounds and distinctness, then sorts canonically.
    pub fn new(p: &FrameParams, mut targets: Vec<Target>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidTargets("at least one target is required".into()));
        }
        for t in &targets {
            if t.delay >= p.m || t.doppler >= p.n {
                return Err(Error::InvalidTargets(format!(
                    "target (delay {}, doppler {}) outside the {}×{} grid",
                    t.delay, t.doppler, p.m, p.n
                )));
            }
        }
        targets.sort_by_key(|t| (t.delay, t.doppler));
        if targets
            .windows(2)
            .any(|w| (w[0].delay, w[0].doppler) == (w[1].delay, w[1].doppler))
        {
            return Err(Error::InvalidTargets("duplicate (delay, doppler) cell".into()));
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `(delay₁, doppler₁, …, delay_P, doppler_P)` in canonical order.
    pub fn label(&self) -> Vec<f64> {
        self.targets
            .iter()
            .flat_map(|t| [t.delay as f64, t.doppler as f64])
            .collect()
    }
}

/// Per-sample SNR in dB. `f64::INFINITY` means noiseless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }
}

/// Draws `count` distinct cells uniformly without replacement and i.i.d.
/// `CN(0, 1/count)` gains.
pub fn sample_targets(p: &FrameParams, count: usize, seed: u64) -> Result<TargetSet> {
    if count == 0 || count > p.cells() {
        return Err(Error::TooManyTargets {
            requested: count,
            cells: p.cells(),
        });
    }
    let mut cell_rng = seeded(sub_seed(seed, 0));
    let mut gain_rng = seeded(sub_seed(seed, 1));
    let std = (0.5 / count as f64).sqrt();
    let targets = index::sample(&mut cell_rng, p.cells(), count)
        .into_iter()
        .map(|cell| {
            let (re, im) = gaussian_pair(&mut gain_rng);
            Target {
                delay: cell % p.m,
                doppler: cell / p.m,
                gain: Complex64::new(std * re, std * im),
            }
        })
        .collect();
    TargetSet::new(p, targets)
}

/// `r[q] = Σ_p h_p · e^{j2π k_p (q − l_p)/(MN)} · x[(q − l_p) mod MN]`
///
/// Delays wrap cyclically within the frame.
pub fn apply_channel(x: &TimeFrame, ts: &TargetSet, p: &FrameParams) -> Result<TimeFrame> {
    x.conforms(p)?;
    let len = p.cells();
    let samples = x.samples();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for t in ts.targets() {
        if t.delay >= p.m || t.doppler >= p.n {
            return Err(Error::InvalidTargets("target outside the frame grid".into()));
        }
        // phase index k·(q − l) reduced mod MN; exact for integer k
        let twiddle: Vec<Complex64> = (0..len)
            .map(|i| Complex64::from_polar(1.0, std::f64::consts::TAU * i as f64 / len as f64))
            .collect();
        for (q, r) in out.iter_mut().enumerate() {
            let shifted = (q + len - t.delay) % len;
            let phase = twiddle[(t.doppler * shifted) % len];
            *r += t.gain * phase * samples[shifted];
        }
    }
    Ok(TimeFrame::from_samples_unchecked(out))
}

/// Adds circularly-symmetric complex Gaussian noise with variance
/// `σ² = P_sig · 10^(−snr/10)`, where `P_sig` is the measured mean power of
/// `x`; each of the real and imaginary parts carries `σ²/2`.
pub fn add_awgn(x: &TimeFrame, spec: NoiseSpec) -> Result<TimeFrame> {
    if spec.snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !spec.snr_db.is_finite() {
        return Err(Error::InvalidParams(format!("snr_db {} is not a level", spec.snr_db)));
    }
    let power = x.mean_power();
    if power <= 0.0 {
        return Err(Error::ZeroSignalPower);
    }
    let std = (power * 10f64.powf(-spec.snr_db / 10.0) / 2.0).sqrt();
    let mut rng = seeded(spec.seed);
    let samples = x
        .samples()
        .iter()
        .map(|&z| {
            let (a, b) = gaussian_pair(&mut rng);
            z + Complex64::new(std * a, std * b)
        })
        .collect();
    Ok(TimeFrame::from_samples_unchecked(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(p: &FrameParams, seed: u64) -> TimeFrame {
        let mut rng = seeded(seed);
        let s = (0..p.cells())
            .map(|_| {
                let (a, b) = gaussian_pair(&mut rng);
                Complex64::new(a, b)
            })
            .collect();
        TimeFrame::new(p, s).unwrap()
    }

    fn single(p: &FrameParams, delay: usize, doppler: usize) -> TargetSet {
        TargetSet::new(
            p,
            vec![Target {
                delay,
                doppler,
                gain: Complex64::new(1.0, 0.0),
            }],
        )
        .unwrap()
    }

    #[test]
    fn identity_channel() {
        let p = FrameParams::new(4, 4, 1.0, 1.0).unwrap();
        let x = frame(&p, 1);
        assert_eq!(apply_channel(&x, &single(&p, 0, 0), &p).unwrap(), x);
    }

    #[test]
    fn pure_delay_is_cyclic_shift() {
        let p = FrameParams::new(4, 4, 1.0, 1.0).unwrap();
        let x = frame(&p, 2);
        let r = apply_channel(&x, &single(&p, 2, 0), &p).unwrap();
        for q in 0..16 {
            assert_eq!(r.samples()[q], x.samples()[(q + 14) % 16]);
        }
    }

    #[test]
    fn pure_doppler_is_linear_phase() {
        let p = FrameParams::new(4, 4, 1.0, 1.0).unwrap();
        let x = frame(&p, 3);
        let r = apply_channel(&x, &single(&p, 0, 1), &p).unwrap();
        for q in 0..16 {
            let expect = x.samples()[q] * Complex64::from_polar(1.0, std::f64::consts::TAU * q as f64 / 16.0);
            assert!((r.samples()[q] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn saturated_target_count_fills_grid() {
        let p = FrameParams::new(5, 3, 1.0, 1.0).unwrap();
        let ts = sample_targets(&p, 15, 4).unwrap();
        let mut seen = [false; 15];
        for t in ts.targets() {
            seen[t.doppler * 5 + t.delay] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert!(sample_targets(&p, 16, 4).is_err());
        assert!(sample_targets(&p, 0, 4).is_err());
    }

    #[test]
    fn targets_are_seeded_and_canonical() {
        let p = FrameParams::paper();
        let a = sample_targets(&p, 4, 77).unwrap();
        assert_eq!(a, sample_targets(&p, 4, 77).unwrap());
        let keys: Vec<_> = a.targets().iter().map(|t| (t.delay, t.doppler)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn duplicate_cells_are_rejected() {
        let p = FrameParams::paper();
        let t = Target {
            delay: 1,
            doppler: 1,
            gain: Complex64::new(1.0, 0.0),
        };
        assert!(TargetSet::new(&p, vec![t, t]).is_err());
        assert!(TargetSet::new(&p, vec![]).is_err());
    }

    #[test]
    fn noiseless_sentinel_is_bit_exact() {
        let p = FrameParams::paper();
        let x = frame(&p, 5);
        assert_eq!(add_awgn(&x, NoiseSpec::noiseless()).unwrap(), x);
    }

    #[test]
    fn zero_frame_is_rejected() {
        let p = FrameParams::new(4, 4, 1.0, 1.0).unwrap();
        let x = TimeFrame::new(&p, vec![Complex64::new(0.0, 0.0); 16]).unwrap();
        let spec = NoiseSpec { snr_db: 0.0, seed: 1 };
        assert!(matches!(add_awgn(&x, spec), Err(Error::ZeroSignalPower)));
    }
}
