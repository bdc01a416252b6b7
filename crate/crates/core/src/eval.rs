//! Range/velocity RMSE, the experiment runner and the report CSV.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::correlator::pick_peaks_in;
use crate::error::{Error, Result};
use crate::grid::FrameParams;
use crate::models::{GeneratorNet, PredictorNet};

/// Compensated sum.
fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn index_rms(truth: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            context: "RMSE sample count",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let per = truth[0].len();
    if per == 0 {
        return Err(Error::InvalidParams("RMSE needs at least one target per sample".into()));
    }
    for (t, p) in truth.iter().zip(pred) {
        if t.len() != per || p.len() != per {
            return Err(Error::DimensionMismatch {
                context: "RMSE targets per sample",
                expected: per,
                actual: if t.len() != per { t.len() } else { p.len() },
            });
        }
    }
    let sq = truth
        .iter()
        .zip(pred)
        .flat_map(|(t, p)| t.iter().zip(p).map(|(a, b)| (a - b) * (a - b)));
    Ok((kahan_sum(sq) / (truth.len() * per) as f64).sqrt())
}

/// `R_res · sqrt(1/(N_S·P) · Σ_i Σ_j (τ_true − τ_pred)²)` over delay indices
/// shaped `(N_S, P)`.
pub fn range_rmse(true_delay: &[Vec<f64>], pred_delay: &[Vec<f64>], p: &FrameParams) -> Result<f64> {
    Ok(p.range_resolution() * index_rms(true_delay, pred_delay)?)
}

/// Velocity analogue of [`range_rmse`] over Doppler indices.
pub fn velocity_rmse(true_doppler: &[Vec<f64>], pred_doppler: &[Vec<f64>], p: &FrameParams) -> Result<f64> {
    Ok(p.velocity_resolution() * index_rms(true_doppler, pred_doppler)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Generator denoising followed by the predictor.
    TwoStage,
    /// Predictor on the corrupted maps.
    CnnOnly,
    /// Largest correlation peaks.
    PeakBaseline,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::TwoStage, Estimator::CnnOnly, Estimator::PeakBaseline];

    pub fn tag(self) -> &'static str {
        match self {
            Estimator::TwoStage => "two_stage",
            Estimator::CnnOnly => "cnn_only",
            Estimator::PeakBaseline => "peak_baseline",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.tag() == s.trim())
            .ok_or_else(|| Error::InvalidParams(format!("unknown estimator {s:?}")))
    }
}

/// How predicted targets are paired with true ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Matching {
    /// Both sides sorted by `(delay, doppler)`.
    #[default]
    Canonical,
    /// Per-sample permutation minimizing the physical squared error.
    /// Analysis aid only.
    Optimal,
}

impl Matching {
    pub fn tag(self) -> &'static str {
        match self {
            Matching::Canonical => "canonical",
            Matching::Optimal => "optimal_non_paper",
        }
    }
}

impl FromStr for Matching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "canonical" => Ok(Matching::Canonical),
            "optimal_non_paper" | "optimal" => Ok(Matching::Optimal),
            other => Err(Error::InvalidParams(format!("unknown matching {other:?}"))),
        }
    }
}

/// Published reference point for `(targets, snr_db)`, if any.
pub fn paper_reference(targets: usize, snr_db: Option<f64>) -> (Option<f64>, Option<f64>) {
    let Some(snr) = snr_db else {
        return (None, None);
    };
    let at = |v: f64| (snr - v).abs() < 1e-9;
    match targets {
        2 if at(-20.0) => (Some(22.49), Some(14.7)),
        2 if at(-15.0) => (Some(11.68), Some(8.43)),
        3 if at(-15.0) => (Some(23.92), Some(10.71)),
        3 if at(-20.0) => (Some(28.92), None),
        4 if at(-20.0) => (Some(61.06), Some(24.50)),
        _ => (None, None),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseReport {
    pub estimator: Estimator,
    /// `None` for a set with mixed SNR.
    pub snr_db: Option<f64>,
    pub targets: usize,
    pub samples: usize,
    pub range_rmse_m: f64,
    pub velocity_rmse_mps: f64,
    pub paper_ref_range_m: Option<f64>,
    pub paper_ref_velocity_mps: Option<f64>,
    pub matching: Matching,
    pub rounded: bool,
}

#[derive(Serialize, Deserialize)]
struct ReportRow {
    estimator: String,
    snr_db: Option<f64>,
    #[serde(rename = "P")]
    targets: usize,
    #[serde(rename = "N_S")]
    samples: usize,
    range_rmse_m: f64,
    velocity_rmse_mps: f64,
    paper_ref_range_m: Option<f64>,
    paper_ref_velocity_mps: Option<f64>,
    matching: String,
    rounded: bool,
}

pub fn write_report_csv<W: Write>(w: W, reports: &[RmseReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(ReportRow {
            estimator: r.estimator.tag().into(),
            snr_db: r.snr_db,
            targets: r.targets,
            samples: r.samples,
            range_rmse_m: r.range_rmse_m,
            velocity_rmse_mps: r.velocity_rmse_mps,
            paper_ref_range_m: r.paper_ref_range_m,
            paper_ref_velocity_mps: r.paper_ref_velocity_mps,
            matching: r.matching.tag().into(),
            rounded: r.rounded,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(r: R) -> Result<Vec<RmseReport>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<ReportRow>()
        .map(|row| {
            let row = row?;
            Ok(RmseReport {
                estimator: row.estimator.parse()?,
                snr_db: row.snr_db,
                targets: row.targets,
                samples: row.samples,
                range_rmse_m: row.range_rmse_m,
                velocity_rmse_mps: row.velocity_rmse_mps,
                paper_ref_range_m: row.paper_ref_range_m,
                paper_ref_velocity_mps: row.paper_ref_velocity_mps,
                matching: row.matching.parse()?,
                rounded: row.rounded,
            })
        })
        .collect()
}

/// Test maps at one SNR point.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub snr_db: Option<f64>,
    /// Normalized corrupted maps, row-major `N × M`.
    pub maps: Vec<Vec<f32>>,
    /// `(delay, doppler)` pairs in canonical order.
    pub labels: Vec<Vec<f64>>,
}

/// Trained stages available to the runner.
#[derive(Default)]
pub struct Pipeline<'a> {
    pub generator: Option<&'a mut GeneratorNet>,
    /// Predictor trained on denoised maps.
    pub two_stage: Option<&'a mut PredictorNet>,
    /// Predictor trained on corrupted maps.
    pub cnn_only: Option<&'a mut PredictorNet>,
}

#[derive(Clone, Copy, Debug)]
pub struct ExperimentOptions {
    pub matching: Matching,
    /// Round predictions to the nearest index before scoring.
    pub round: bool,
    pub batch_size: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            matching: Matching::Canonical,
            round: false,
            batch_size: 64,
        }
    }
}

/// Orders `(delay, doppler)` pairs by delay, then Doppler.
pub fn canonical_pairs(v: &[f64]) -> Vec<f64> {
    let mut pairs: Vec<(f64, f64)> = v.chunks(2).map(|c| (c[0], c[1])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs.into_iter().flat_map(|(a, b)| [a, b]).collect()
}

/// Reorders `pred` to the permutation of its pairs closest to `truth` in
/// squared physical distance.
fn optimal_pairs(truth: &[f64], pred: &[f64], p: &FrameParams) -> Vec<f64> {
    let (rr, vr) = (p.range_resolution(), p.velocity_resolution());
    let t: Vec<(f64, f64)> = truth.chunks(2).map(|c| (c[0], c[1])).collect();
    let q: Vec<(f64, f64)> = pred.chunks(2).map(|c| (c[0], c[1])).collect();
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| ((t[i].0 - q[j].0) * rr).powi(2) + ((t[i].1 - q[j].1) * vr).powi(2))
            .sum()
    };
    let best = (0..q.len())
        .permutations(q.len())
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .unwrap_or_default();
    best.into_iter().flat_map(|j| [q[j].0, q[j].1]).collect()
}

/// Scores `(delay, doppler)` predictions against labels.
pub fn score(p: &FrameParams, labels: &[Vec<f64>], preds: &[Vec<f64>], opts: &ExperimentOptions) -> Result<(f64, f64)> {
    if labels.len() != preds.len() {
        return Err(Error::DimensionMismatch {
            context: "prediction count",
            expected: labels.len(),
            actual: preds.len(),
        });
    }
    let mut td = Vec::with_capacity(labels.len());
    let (mut tk, mut pd, mut pk) = (Vec::new(), Vec::new(), Vec::new());
    for (t, q) in labels.iter().zip(preds) {
        if t.len() != q.len() || t.len() % 2 != 0 {
            return Err(Error::DimensionMismatch {
                context: "prediction length (2P)",
                expected: t.len(),
                actual: q.len(),
            });
        }
        let t = canonical_pairs(t);
        let mut q: Vec<f64> = if opts.round {
            q.iter().map(|v| v.round()).collect()
        } else {
            q.clone()
        };
        q = match opts.matching {
            Matching::Canonical => canonical_pairs(&q),
            Matching::Optimal => optimal_pairs(&t, &q, p),
        };
        td.push(t.iter().step_by(2).copied().collect::<Vec<_>>());
        tk.push(t.iter().skip(1).step_by(2).copied().collect::<Vec<_>>());
        pd.push(q.iter().step_by(2).copied().collect::<Vec<_>>());
        pk.push(q.iter().skip(1).step_by(2).copied().collect::<Vec<_>>());
    }
    Ok((range_rmse(&td, &pd, p)?, velocity_rmse(&tk, &pk, p)?))
}

/// Peak-picking predictions on normalized maps.
pub fn peak_predictions(p: &FrameParams, maps: &[Vec<f32>], targets: usize) -> Result<Vec<Vec<f64>>> {
    maps.iter()
        .map(|m| {
            let mags: Vec<f64> = m.iter().map(|&v| v as f64).collect();
            let peaks = pick_peaks_in(&mags, p.n, p.m, targets)?;
            Ok(peaks
                .iter()
                .flat_map(|pk| [pk.delay as f64, pk.doppler as f64])
                .collect())
        })
        .collect()
}

/// Runs every requested estimator on every set.
pub fn run_experiment(
    p: &FrameParams,
    targets: usize,
    sets: &[EvalSet],
    estimators: &[Estimator],
    pipeline: &mut Pipeline<'_>,
    opts: &ExperimentOptions,
) -> Result<Vec<RmseReport>> {
    for (name, pred) in [("two_stage", &pipeline.two_stage), ("cnn_only", &pipeline.cnn_only)] {
        if let Some(pr) = pred {
            if pr.targets != targets {
                return Err(Error::InvalidParams(format!(
                    "{name} predictor has P={} but the test set has P={targets}",
                    pr.targets
                )));
            }
        }
    }
    let mut reports = Vec::new();
    for set in sets {
        if set.maps.is_empty() || set.maps.len() != set.labels.len() {
            return Err(Error::InvalidDataset("evaluation set is empty or unpaired".into()));
        }
        if let Some(bad) = set.labels.iter().find(|l| l.len() != 2 * targets) {
            return Err(Error::InvalidParams(format!(
                "label of length {} for P={targets}",
                bad.len()
            )));
        }
        let views: Vec<&[f32]> = set.maps.iter().map(|m| m.as_slice()).collect();
        for &est in estimators {
            let preds = match est {
                Estimator::PeakBaseline => peak_predictions(p, &set.maps, targets)?,
                Estimator::CnnOnly => {
                    let pr = pipeline
                        .cnn_only
                        .as_deref_mut()
                        .ok_or_else(|| Error::InvalidParams("cnn_only needs a predictor".into()))?;
                    pr.predict_maps(&views, opts.batch_size)?
                }
                Estimator::TwoStage => {
                    let g = pipeline
                        .generator
                        .as_deref_mut()
                        .ok_or_else(|| Error::InvalidParams("two_stage needs a generator".into()))?;
                    let denoised = g.denoise_maps(&views, opts.batch_size)?;
                    let dv: Vec<&[f32]> = denoised.iter().map(|m| m.as_slice()).collect();
                    let pr = pipeline
                        .two_stage
                        .as_deref_mut()
                        .ok_or_else(|| Error::InvalidParams("two_stage needs a predictor".into()))?;
                    pr.predict_maps(&dv, opts.batch_size)?
                }
            };
            let (range, velocity) = score(p, &set.labels, &preds, opts)?;
            let (rr, vr) = paper_reference(targets, set.snr_db);
            reports.push(RmseReport {
                estimator: est,
                snr_db: set.snr_db,
                targets,
                samples: set.maps.len(),
                range_rmse_m: range,
                velocity_rmse_mps: velocity,
                paper_ref_range_m: rr,
                paper_ref_velocity_mps: vr,
                matching: opts.matching,
                rounded: opts.round,
            });
        }
    }
    Ok(reports)
}

/// Outcome of one comparative check.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    pub name: &'static str,
    /// `None` when the reports lack the rows the check needs.
    pub passed: Option<bool>,
    pub detail: String,
}

fn find(reports: &[RmseReport], est: Estimator, snr: f64) -> Option<&RmseReport> {
    reports
        .iter()
        .find(|r| r.estimator == est && r.snr_db.is_some_and(|s| (s - snr).abs() < 1e-9))
}

/// two_stage range RMSE ≤ cnn_only at −20 dB, and two_stage RMSE (range and
/// velocity) at −15 dB ≤ at −20 dB.
pub fn comparative_oracles(reports: &[RmseReport]) -> Vec<OracleOutcome> {
    let ablation = match (
        find(reports, Estimator::TwoStage, -20.0),
        find(reports, Estimator::CnnOnly, -20.0),
    ) {
        (Some(a), Some(b)) => OracleOutcome {
            name: "ablation",
            passed: Some(a.range_rmse_m <= b.range_rmse_m),
            detail: format!(
                "two_stage {:.3} m vs cnn_only {:.3} m at -20 dB",
                a.range_rmse_m, b.range_rmse_m
            ),
        },
        _ => OracleOutcome {
            name: "ablation",
            passed: None,
            detail: "needs two_stage and cnn_only at -20 dB".into(),
        },
    };
    let monotone = match (
        find(reports, Estimator::TwoStage, -15.0),
        find(reports, Estimator::TwoStage, -20.0),
    ) {
        (Some(a), Some(b)) => OracleOutcome {
            name: "monotonicity",
            passed: Some(a.range_rmse_m <= b.range_rmse_m && a.velocity_rmse_mps <= b.velocity_rmse_mps),
            detail: format!(
                "two_stage -15 dB {:.3} m / {:.3} m/s vs -20 dB {:.3} m / {:.3} m/s",
                a.range_rmse_m, a.velocity_rmse_mps, b.range_rmse_m, b.velocity_rmse_mps
            ),
        },
        _ => OracleOutcome {
            name: "monotonicity",
            passed: None,
            detail: "needs two_stage at -15 and -20 dB".into(),
        },
    };
    vec![ablation, monotone]
}
