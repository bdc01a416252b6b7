//! Paired corrupted/clean correlation-map datasets and the `OTFSDD1` container.
//!
//! Container layout, all little-endian:
//!
//! | field       | type      |
//! |-------------|-----------|
//! | magic       | `OTFSDD1\0` |
//! | version     | u32 (= 1) |
//! | M, N, P     | u32 ×3    |
//! | count       | u64       |
//! | snr_low_db  | f32       |
//! | snr_high_db | f32       |
//! | clean_snr_db| f32       |
//! | base_seed   | u64       |
//!
//! followed by `count` records of label (`2P` f32, delay/Doppler pairs in
//! canonical order), corrupted map (`M·N` f32), clean map (`M·N` f32),
//! snr_db (f32) and seed (u64). Maps are row-major with row = Doppler index.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::channel::{add_awgn, apply_channel, sample_targets, NoiseSpec, TargetSet};
use crate::correlator::{correlate_dd, CorrelationMap, MapSource};
use crate::error::{Error, Result};
use crate::grid::{isfft, sfft, DdMatrix, FrameParams};
use crate::modem::{heisenberg_modulate, map_probe_symbols, wigner_demodulate};
use crate::rng::{seeded, sub_seed};

pub const MAGIC: [u8; 8] = *b"OTFSDD1\0";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 8 + 4 + 3 * 4 + 8 + 3 * 4 + 8;

/// Clean-leg SNR used throughout.
pub const CLEAN_SNR_DB: f64 = 20.0;

const PROBE_STREAM: u64 = 0;
const TARGET_STREAM: u64 = 1;
const SNR_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const CLEAN_NOISE_STREAM: u64 = 4;

/// SNR of the corrupted leg: one level for the whole set, or a uniform draw
/// per sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SnrSetting {
    Fixed(f64),
    Range { low: f64, high: f64 },
}

impl SnrSetting {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            SnrSetting::Fixed(v) => (v, v),
            SnrSetting::Range { low, high } => (low, high),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        let ok = match self {
            SnrSetting::Fixed(v) => !v.is_nan() && *v != f64::NEG_INFINITY,
            SnrSetting::Range { .. } => lo.is_finite() && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad SNR setting {self:?}")))
        }
    }

    /// The level used by a sample, rounded to f32 so that the stored value
    /// reproduces the sample exactly.
    fn draw(&self, seed: u64) -> f64 {
        let v = match *self {
            SnrSetting::Fixed(v) => v,
            SnrSetting::Range { low, high } if low == high => low,
            SnrSetting::Range { low, high } => seeded(sub_seed(seed, SNR_STREAM)).gen_range(low..=high),
        };
        v as f32 as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    /// `(delay₁, doppler₁, …)` as grid indices.
    pub label: Vec<f32>,
    /// Normalized corrupted map, row-major `N × M`.
    pub corrupted: Vec<f32>,
    /// Normalized clean map.
    pub clean: Vec<f32>,
    pub snr_db: f32,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetHeader {
    pub m: u32,
    pub n: u32,
    pub targets: u32,
    pub count: u64,
    pub snr_low_db: f32,
    pub snr_high_db: f32,
    pub clean_snr_db: f32,
    pub base_seed: u64,
}

impl DatasetHeader {
    pub fn record_bytes(&self) -> usize {
        4 * (2 * self.targets as usize + 2 * self.cells() + 1) + 8
    }

    pub fn file_bytes(&self) -> u64 {
        HEADER_BYTES as u64 + self.count * self.record_bytes() as u64
    }

    pub fn cells(&self) -> usize {
        self.m as usize * self.n as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<SampleRecord>,
}

/// Min-max normalized magnitude map.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedMap {
    pub values: Vec<f64>,
    /// Set when every magnitude was equal; `values` is then all zeros.
    pub degenerate: bool,
}

/// `2·(x − min)/(max − min) − 1`
pub fn normalize_values(values: &[f64]) -> NormalizedMap {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return NormalizedMap {
            values: vec![0.0; values.len()],
            degenerate: true,
        };
    }
    let span = hi - lo;
    NormalizedMap {
        values: values.iter().map(|&x| 2.0 * (x - lo) / span - 1.0).collect(),
        degenerate: false,
    }
}

/// Normalizes `|V|`.
pub fn normalize_map(v: &CorrelationMap) -> NormalizedMap {
    normalize_values(&v.magnitudes())
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Both correlation maps of one scene.
#[derive(Clone, Debug)]
pub struct SceneMaps {
    pub corrupted: CorrelationMap,
    pub clean: CorrelationMap,
}

/// Transmit `probe`, pass it through `targets`, and correlate two receptions
/// with independent noise against the probe.
pub fn simulate_scene(
    p: &FrameParams,
    probe: &DdMatrix,
    targets: &TargetSet,
    corrupted: NoiseSpec,
    clean: NoiseSpec,
) -> Result<SceneMaps> {
    let x = heisenberg_modulate(&isfft(probe, p)?, p)?;
    let r = apply_channel(&x, targets, p)?;
    let leg = |noise: NoiseSpec, source: MapSource| -> Result<CorrelationMap> {
        let y = add_awgn(&r, noise)?;
        let b = sfft(&wigner_demodulate(&y, p)?, p)?;
        let mut v = correlate_dd(&b, probe, p)?;
        v.source = source;
        Ok(v)
    };
    Ok(SceneMaps {
        corrupted: leg(corrupted, MapSource::Corrupted)?,
        clean: leg(clean, MapSource::Clean)?,
    })
}

/// A generated sample together with its scene.
#[derive(Clone, Debug)]
pub struct GeneratedSample {
    pub record: SampleRecord,
    pub targets: TargetSet,
    pub maps: SceneMaps,
}

/// Full generation pipeline for one sample. Probe symbols, targets, SNR and
/// the two noise realizations come from separate streams of `seed`.
pub fn generate_sample_full(
    p: &FrameParams,
    targets: usize,
    snr: SnrSetting,
    clean_snr_db: f64,
    seed: u64,
) -> Result<GeneratedSample> {
    snr.validate()?;
    let snr_db = snr.draw(seed);
    let clean_db = clean_snr_db as f32 as f64;
    let probe = map_probe_symbols(p, sub_seed(seed, PROBE_STREAM));
    let ts = sample_targets(p, targets, sub_seed(seed, TARGET_STREAM))?;
    let maps = simulate_scene(
        p,
        &probe,
        &ts,
        NoiseSpec {
            snr_db,
            seed: sub_seed(seed, NOISE_STREAM),
        },
        NoiseSpec {
            snr_db: clean_db,
            seed: sub_seed(seed, CLEAN_NOISE_STREAM),
        },
    )?;
    let record = SampleRecord {
        label: ts.label().iter().map(|&v| v as f32).collect(),
        corrupted: to_f32(&normalize_map(&maps.corrupted).values),
        clean: to_f32(&normalize_map(&maps.clean).values),
        snr_db: snr_db as f32,
        seed,
    };
    Ok(GeneratedSample {
        record,
        targets: ts,
        maps,
    })
}

pub fn generate_sample(
    p: &FrameParams,
    targets: usize,
    snr: SnrSetting,
    clean_snr_db: f64,
    seed: u64,
) -> Result<SampleRecord> {
    Ok(generate_sample_full(p, targets, snr, clean_snr_db, seed)?.record)
}

/// `count` samples with seeds `base_seed, base_seed + 1, …`.
pub fn generate_dataset(
    p: &FrameParams,
    targets: usize,
    snr: SnrSetting,
    clean_snr_db: f64,
    count: usize,
    base_seed: u64,
) -> Result<Dataset> {
    snr.validate()?;
    let records = (0..count as u64)
        .map(|i| generate_sample(p, targets, snr, clean_snr_db, base_seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = snr.bounds();
    Ok(Dataset {
        header: DatasetHeader {
            m: dim_u32(p.m)?,
            n: dim_u32(p.n)?,
            targets: dim_u32(targets)?,
            count: count as u64,
            snr_low_db: lo as f32,
            snr_high_db: hi as f32,
            clean_snr_db: clean_snr_db as f32,
            base_seed,
        },
        records,
    })
}

fn dim_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidDataset(format!("dimension {v} exceeds u32")))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that every record has the header's geometry, finite maps in
    /// `[−1, 1]` and in-bounds labels.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.count != self.records.len() as u64 {
            return Err(Error::InvalidDataset(format!(
                "header declares {} records, found {}",
                h.count,
                self.records.len()
            )));
        }
        if h.m == 0 || h.n == 0 || h.targets == 0 || h.targets as usize > h.cells() {
            return Err(Error::InvalidDataset(format!(
                "bad geometry M={} N={} P={}",
                h.m, h.n, h.targets
            )));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.label.len() != 2 * h.targets as usize || r.corrupted.len() != h.cells() || r.clean.len() != h.cells() {
                return Err(Error::InvalidDataset(format!("record {i} has inconsistent lengths")));
            }
            let in_range = |v: &f32| v.is_finite() && (-1.0..=1.0).contains(v);
            if !r.corrupted.iter().all(in_range) || !r.clean.iter().all(in_range) {
                return Err(Error::InvalidDataset(format!("record {i} map outside [-1, 1]")));
            }
            for pair in r.label.chunks(2) {
                let ok = pair[0] >= 0.0 && pair[0] < h.m as f32 && pair[1] >= 0.0 && pair[1] < h.n as f32;
                if !ok {
                    return Err(Error::InvalidDataset(format!("record {i} label out of bounds")));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let h = &self.header;
        let mut buf = Vec::with_capacity(h.file_bytes() as usize);
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        for v in [h.m, h.n, h.targets] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&h.count.to_le_bytes());
        for v in [h.snr_low_db, h.snr_high_db, h.clean_snr_db] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&h.base_seed.to_le_bytes());
        for r in &self.records {
            for v in r.label.iter().chain(&r.corrupted).chain(&r.clean) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&r.snr_db.to_le_bytes());
            buf.extend_from_slice(&r.seed.to_le_bytes());
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if bytes.len() >= MAGIC.len() && bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        cur.take(MAGIC.len())?;
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let (m, n, targets) = (cur.u32()?, cur.u32()?, cur.u32()?);
        let count = cur.u64()?;
        let header = DatasetHeader {
            m,
            n,
            targets,
            count,
            snr_low_db: cur.f32()?,
            snr_high_db: cur.f32()?,
            clean_snr_db: cur.f32()?,
            base_seed: cur.u64()?,
        };
        let expected = header.file_bytes();
        if (bytes.len() as u64) < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len() as u64,
            });
        }
        if bytes.len() as u64 > expected {
            return Err(Error::InvalidDataset(format!(
                "{} trailing bytes after {} records",
                bytes.len() as u64 - expected,
                count
            )));
        }
        let cells = header.cells();
        let mut records = Vec::with_capacity(count as usize);
        for _ in 0..count {
            records.push(SampleRecord {
                label: cur.f32s(2 * targets as usize)?,
                corrupted: cur.f32s(cells)?,
                clean: cur.f32s(cells)?,
                snr_db: cur.f32()?,
                seed: cur.u64()?,
            });
        }
        let ds = Dataset { header, records };
        ds.validate()?;
        Ok(ds)
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// One row per record: index, seed, snr_db, then the label pairs.
    pub fn write_labels_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut head = vec!["index".to_string(), "seed".into(), "snr_db".into()];
        for t in 1..=self.header.targets {
            head.push(format!("delay_{t}"));
            head.push(format!("doppler_{t}"));
        }
        out.write_record(&head)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![i.to_string(), r.seed.to_string(), r.snr_db.to_string()];
            row.extend(r.label.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn params(&self, delta_f: f64, f_c: f64) -> Result<FrameParams> {
        FrameParams::new(self.header.m as usize, self.header.n as usize, delta_f, f_c)
    }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.write(path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read(path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                expected: (self.pos + n) as u64,
                found: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
