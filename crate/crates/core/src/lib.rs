//! OTFS radar simulation and the two-stage neural delay/Doppler estimator.
//!
//! The signal chain runs probe symbols through [`grid::isfft`],
//! [`modem::heisenberg_modulate`], a point-target [`channel`], AWGN,
//! [`modem::wigner_demodulate`] and [`grid::sfft`], then correlates the
//! received delay-Doppler grid against the transmitted one. The resulting
//! magnitude maps feed a GAN denoiser and a CNN regressor ([`models`]),
//! scored by range and velocity RMSE ([`eval`]).

pub mod channel;
pub mod correlator;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod models;
pub mod modem;
pub mod rng;

pub use channel::{add_awgn, apply_channel, sample_targets, NoiseSpec, Target, TargetSet};
pub use correlator::{correlate_dd, phase_offset, pick_peaks, CorrelationMap, MapSource, Peak};
pub use dataset::{
    generate_dataset, generate_sample, normalize_map, read_dataset, write_dataset, Dataset, DatasetHeader,
    SampleRecord, SnrSetting,
};
pub use error::{Error, Result};
pub use eval::{range_rmse, run_experiment, velocity_rmse, Estimator, EvalSet, Pipeline, RmseReport};
pub use grid::{isfft, sfft, DdMatrix, FrameParams, TfMatrix, SPEED_OF_LIGHT};
pub use models::{
    train_gan, train_predictor, DiscriminatorNet, GanTrainConfig, GeneratorNet, PredictorNet, PredictorTrainConfig,
    Widths,
};
pub use modem::{heisenberg_modulate, map_probe_symbols, wigner_demodulate, TimeFrame};
