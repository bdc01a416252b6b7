//! Accumulated 2D delay-Doppler correlation, peak picking and heatmap export.

use std::cmp::Ordering;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{DdMatrix, FrameParams};

/// Which leg of the pipeline a correlation map came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapSource {
    Clean,
    Corrupted,
    Denoised,
}

/// `V[k,l]`, stored `N × M` with row = Doppler `k`, column = delay `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMap {
    pub values: DdMatrix,
    pub source: MapSource,
}

impl CorrelationMap {
    /// `|V[k,l]|` in row-major order.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.as_slice().iter().map(|z| z.norm()).collect()
    }
}

/// `γ[k,l] = 1` for `l ≥ 0`, `e^{−j2πk/N}` otherwise.
pub fn phase_offset(k: i64, l: i64, p: &FrameParams) -> Complex64 {
    if l >= 0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, -std::f64::consts::TAU * k as f64 / p.n as f64)
    }
}

/// `V[k,l] = Σ_n Σ_m B*[n,m] · A[[n−k]_N, [m−l]_M] · γ[n−k, m−l] · e^{j2π(m−l)k/(NM)}`
///
/// `γ` and the phase ramp take the differences before reduction. All phases
/// are integer multiples of `2π/(NM)` and are read from one table, so the
/// result does not depend on how far the differences wander from zero.
pub fn correlate_dd(b: &DdMatrix, a: &DdMatrix, p: &FrameParams) -> Result<CorrelationMap> {
    b.conforms(p)?;
    a.conforms(p)?;
    let (n_dim, m_dim) = (p.n, p.m);
    let len = p.cells();
    let twiddle: Vec<Complex64> = (0..len)
        .map(|i| Complex64::from_polar(1.0, std::f64::consts::TAU * i as f64 / len as f64))
        .collect();
    let turn = |x: i64| twiddle[x.rem_euclid(len as i64) as usize];

    let bc: Vec<Complex64> = b.as_slice().iter().map(|z| z.conj()).collect();
    let a = a.as_slice();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    // gamma for l < 0 depends only on d = n − k ∈ (−N, N): e^{−j2πd/N}
    let gamma: Vec<Complex64> = (-(n_dim as i64) + 1..n_dim as i64)
        .map(|d| turn(-d * m_dim as i64))
        .collect();
    let mut ramp = vec![Complex64::new(0.0, 0.0); m_dim];
    for k in 0..n_dim {
        for l in 0..m_dim {
            // ramp[m] = e^{j2π(m−l)k/(NM)}
            for (m, r) in ramp.iter_mut().enumerate() {
                *r = turn((m as i64 - l as i64) * k as i64);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..n_dim {
                let d = n as i64 - k as i64;
                let a_row = &a[((n + n_dim - k) % n_dim) * m_dim..][..m_dim];
                let b_row = &bc[n * m_dim..][..m_dim];
                let mut wrapped = Complex64::new(0.0, 0.0);
                for m in 0..l {
                    wrapped += b_row[m] * a_row[m + m_dim - l] * ramp[m];
                }
                let mut direct = Complex64::new(0.0, 0.0);
                for m in l..m_dim {
                    direct += b_row[m] * a_row[m - l] * ramp[m];
                }
                acc += direct + wrapped * gamma[(d + n_dim as i64 - 1) as usize];
            }
            out[k * m_dim + l] = acc;
        }
    }
    Ok(CorrelationMap {
        values: DdMatrix::from_vec(p, out)?,
        source: MapSource::Corrupted,
    })
}

/// A picked cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub delay: usize,
    pub doppler: usize,
    pub magnitude: f64,
}

/// Top-`count` cells of `|V|` with cyclic 8-neighbour suppression.
pub fn pick_peaks(v: &CorrelationMap, count: usize) -> Result<Vec<Peak>> {
    pick_peaks_in(&v.magnitudes(), v.values.rows(), v.values.cols(), count)
}

/// [`pick_peaks`] on a row-major `rows × cols` magnitude map (rows are
/// Doppler, columns delay).
///
/// Cells are visited by descending magnitude, ties by ascending
/// `(doppler, delay)`. A picked cell suppresses its eight cyclic neighbours.
/// If suppression leaves fewer than `count` candidates the remaining
/// unpicked cells fill up in the same order. The result is sorted by
/// `(delay, doppler)`.
pub fn pick_peaks_in(mags: &[f64], rows: usize, cols: usize, count: usize) -> Result<Vec<Peak>> {
    if mags.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "magnitude map",
            expected: rows * cols,
            actual: mags.len(),
        });
    }
    if count == 0 || count > mags.len() {
        return Err(Error::TooManyTargets {
            requested: count,
            cells: mags.len(),
        });
    }
    let mut order: Vec<usize> = (0..mags.len()).collect();
    order.sort_by(|&x, &y| mags[y].partial_cmp(&mags[x]).unwrap_or(Ordering::Equal).then(x.cmp(&y)));
    let mut suppressed = vec![false; mags.len()];
    let mut picked = vec![false; mags.len()];
    let mut chosen = Vec::with_capacity(count);
    for &cell in &order {
        if chosen.len() == count {
            break;
        }
        if suppressed[cell] {
            continue;
        }
        picked[cell] = true;
        chosen.push(cell);
        let (r, c) = (cell / cols, cell % cols);
        for dr in [rows - 1, 0, 1] {
            for dc in [cols - 1, 0, 1] {
                suppressed[((r + dr) % rows) * cols + (c + dc) % cols] = true;
            }
        }
    }
    for &cell in &order {
        if chosen.len() == count {
            break;
        }
        if !picked[cell] {
            picked[cell] = true;
            chosen.push(cell);
        }
    }
    let mut peaks: Vec<Peak> = chosen
        .into_iter()
        .map(|cell| Peak {
            delay: cell % cols,
            doppler: cell / cols,
            magnitude: mags[cell],
        })
        .collect();
    peaks.sort_by_key(|pk| (pk.delay, pk.doppler));
    Ok(peaks)
}

/// Writes a row-major map as CSV, one line per row.
pub fn write_heatmap_csv<W: Write>(mut w: W, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    check_map(values, rows, cols)?;
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes a row-major map as an ASCII (P2) graymap, min-max scaled to 0..=255.
/// A constant map is written as all zeros.
pub fn write_heatmap_pgm<W: Write>(mut w: W, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    check_map(values, rows, cols)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    writeln!(w, "P2")?;
    writeln!(w, "{cols} {rows}")?;
    writeln!(w, "255")?;
    for row in values.chunks(cols) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let level = if hi > lo {
                    (255.0 * (v - lo) / (hi - lo)).round()
                } else {
                    0.0
                };
                format!("{}", level as u8)
            })
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

fn check_map(values: &[f64], rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "heatmap",
            expected: rows * cols,
            actual: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("heatmap values must be finite".into()));
    }
    Ok(())
}
