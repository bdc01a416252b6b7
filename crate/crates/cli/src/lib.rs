//! Command-line driver: dataset generation, GAN and predictor training,
//! evaluation, heatmap export and gradient checks.

pub mod commands;
pub mod config;
pub mod gradcheck;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("oracle failed: {0}")]
    Oracle(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

impl From<otfs_radar::Error> for CliError {
    fn from(e: otfs_radar::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<otfs_nn::NnError> for CliError {
    fn from(e: otfs_nn::NnError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "otfs",
    version,
    about = "OTFS radar delay-Doppler estimation with a GAN denoiser and a CNN predictor"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides a config key, e.g. `--set gan_epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// 2000 training and 500 test samples.
    #[arg(long, global = true)]
    pub desk_scale: bool,
    /// Comma-separated SNR points in dB.
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "DB,...")]
    pub snr_grid: Option<String>,
    /// Comma-separated subset of two_stage, cnn_only, peak_baseline.
    #[arg(long, global = true, value_name = "NAME,...")]
    pub estimators: Option<String>,
    /// Directory holding datasets, checkpoints, logs and reports.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CnnMode {
    /// Two-stage when a generator checkpoint exists, otherwise cnn-only.
    Auto,
    /// Train on generator-denoised maps.
    TwoStage,
    /// Train on corrupted maps directly.
    CnnOnly,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the training set and one test set per SNR grid point.
    Generate,
    /// Train the generator and discriminator.
    TrainGan {
        /// Continue from the checkpoints in the work directory.
        #[arg(long)]
        resume: bool,
    },
    /// Train a predictor.
    TrainCnn {
        #[arg(long, value_enum, default_value_t = CnnMode::Auto)]
        mode: CnnMode,
        #[arg(long)]
        resume: bool,
    },
    /// Score the estimators on every test set and write report.csv.
    Evaluate {
        /// Exit with status 3 when a comparative oracle fails.
        #[arg(long)]
        assert: bool,
    },
    /// Export clean and corrupted maps as PGM and CSV.
    Heatmap {
        /// Dataset to read; defaults to the first test set.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Synthesize a scene instead, e.g. `2:10,7:17` as delay:doppler pairs.
        #[arg(long, conflicts_with_all = ["dataset", "index"])]
        scene: Option<String>,
        /// With --scene, leave both legs noise-free.
        #[arg(long, requires = "scene")]
        noiseless: bool,
        /// Output path prefix.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks; exits 3 on failure.
    GradCheck,
}

impl Cli {
    /// Config file, then `--set` pairs, then dedicated flags.
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let c = &self.common;
        let mut cfg = match &c.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if c.desk_scale {
            (cfg.train_samples, cfg.test_samples) = config::DESK_SCALE;
        }
        for kv in &c.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(g) = &c.snr_grid {
            cfg.snr_grid = config::parse_list("--snr-grid", g)?;
        }
        if let Some(e) = &c.estimators {
            cfg.estimators = config::parse_list("--estimators", e)?;
        }
        if let Some(d) = &c.work_dir {
            cfg.work_dir = d.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
