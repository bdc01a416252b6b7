//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use otfs_radar::eval::Matching;
use otfs_radar::{Estimator, FrameParams, GanTrainConfig, PredictorTrainConfig, SnrSetting};

use crate::CliError;

/// Train/test sizes of the `--desk-scale` preset.
pub const DESK_SCALE: (usize, usize) = (2000, 500);

/// Offset between the training seed and the test-set seed.
pub const TEST_SEED_OFFSET: u64 = 1_000_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f: f64,
    pub f_c: f64,
    pub targets: usize,
    pub snr: SnrSetting,
    pub clean_snr_db: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub snr_grid: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub gan_epochs: usize,
    pub gan_batch: usize,
    pub gan_lr: f64,
    pub lambda: f64,
    pub adversarial_weight: f64,
    pub cnn_epochs: usize,
    pub cnn_batch: usize,
    pub cnn_lr: f64,
    pub val_fraction: f64,
    pub eval_batch: usize,
    pub matching: Matching,
    pub round: bool,
    pub seed: u64,
    pub work_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gan = GanTrainConfig::default();
        let cnn = PredictorTrainConfig::default();
        Self {
            m: 28,
            n: 28,
            delta_f: 150e3,
            f_c: 60e9,
            targets: 2,
            snr: SnrSetting::Range { low: -20.0, high: 0.0 },
            clean_snr_db: otfs_radar::dataset::CLEAN_SNR_DB,
            train_samples: 50_000,
            test_samples: 10_000,
            snr_grid: vec![-20.0, -15.0, -10.0, -5.0, 0.0],
            estimators: Estimator::ALL.to_vec(),
            gan_epochs: gan.epochs,
            gan_batch: gan.batch_size,
            gan_lr: gan.learning_rate,
            lambda: gan.reconstruction_weight,
            adversarial_weight: gan.adversarial_weight,
            cnn_epochs: cnn.epochs,
            cnn_batch: cnn.batch_size,
            cnn_lr: cnn.learning_rate,
            val_fraction: cnn.validation_fraction,
            eval_batch: 64,
            matching: Matching::Canonical,
            round: false,
            seed: 0,
            work_dir: PathBuf::from("otfs-run"),
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value:?}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key.trim() {
            "m" => self.m = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "delta_f" => self.delta_f = num(key, value)?,
            "f_c" => self.f_c = num(key, value)?,
            "targets" => self.targets = num(key, value)?,
            "snr_db" => self.snr = SnrSetting::Fixed(num(key, value)?),
            "snr_range" => {
                let v: Vec<f64> = parse_list(key, value)?;
                let [low, high] = v[..] else {
                    return Err(bad(key, value, "expected low,high"));
                };
                self.snr = SnrSetting::Range { low, high };
            }
            "clean_snr_db" => self.clean_snr_db = num(key, value)?,
            "train_samples" => self.train_samples = num(key, value)?,
            "test_samples" => self.test_samples = num(key, value)?,
            "snr_grid" => self.snr_grid = parse_list(key, value)?,
            "estimators" => self.estimators = parse_list(key, value)?,
            "gan_epochs" => self.gan_epochs = num(key, value)?,
            "gan_batch" => self.gan_batch = num(key, value)?,
            "gan_lr" => self.gan_lr = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "adversarial_weight" => self.adversarial_weight = num(key, value)?,
            "cnn_epochs" => self.cnn_epochs = num(key, value)?,
            "cnn_batch" => self.cnn_batch = num(key, value)?,
            "cnn_lr" => self.cnn_lr = num(key, value)?,
            "val_fraction" => self.val_fraction = num(key, value)?,
            "eval_batch" => self.eval_batch = num(key, value)?,
            "matching" => self.matching = num(key, value)?,
            "round" => self.round = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "work_dir" => self.work_dir = PathBuf::from(value),
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a config file body; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn frame(&self) -> Result<FrameParams, CliError> {
        FrameParams::new(self.m, self.n, self.delta_f, self.f_c).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn gan(&self) -> GanTrainConfig {
        GanTrainConfig {
            epochs: self.gan_epochs,
            batch_size: self.gan_batch,
            learning_rate: self.gan_lr,
            reconstruction_weight: self.lambda,
            adversarial_weight: self.adversarial_weight,
            seed: self.seed,
        }
    }

    pub fn cnn(&self) -> PredictorTrainConfig {
        PredictorTrainConfig {
            epochs: self.cnn_epochs,
            batch_size: self.cnn_batch,
            learning_rate: self.cnn_lr,
            validation_fraction: self.val_fraction,
            seed: self.seed,
        }
    }

    pub fn test_seed(&self) -> u64 {
        self.seed.wrapping_add(TEST_SEED_OFFSET)
    }

    /// Checks every field against the library invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: otfs_radar::Error| CliError::Config(e.to_string());
        let p = self.frame()?;
        if self.targets == 0 || self.targets > p.cells() {
            return Err(CliError::Config(format!(
                "targets = {} must lie in 1..={}",
                self.targets,
                p.cells()
            )));
        }
        self.snr.validate().map_err(cfg_err)?;
        if !self.clean_snr_db.is_finite() && self.clean_snr_db != f64::INFINITY {
            return Err(CliError::Config(format!("clean_snr_db = {}", self.clean_snr_db)));
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(CliError::Config("sample counts must be positive".into()));
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config(format!("snr_grid {:?}", self.snr_grid)));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config("no estimators requested".into()));
        }
        if self.eval_batch == 0 {
            return Err(CliError::Config("eval_batch must be positive".into()));
        }
        self.gan().validate().map_err(cfg_err)?;
        self.cnn().validate().map_err(cfg_err)?;
        // the networks are built for 28×28 maps
        if (self.m, self.n) != (28, 28) {
            return Err(CliError::Config(format!(
                "the networks expect a 28×28 grid, got M = {}, N = {}",
                self.m, self.n
            )));
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }

    pub fn train_path(&self) -> PathBuf {
        self.path("train.otfsdd")
    }

    pub fn test_path(&self, snr_db: f64) -> PathBuf {
        self.path(&format!("test_{snr_db}dB.otfsdd"))
    }

    /// One-line description of the SNR mode, for summaries.
    pub fn snr_mode(&self) -> String {
        match self.snr {
            SnrSetting::Fixed(v) => format!("fixed {v} dB"),
            SnrSetting::Range { low, high } => format!("mixed {low}..{high} dB"),
        }
    }
}
