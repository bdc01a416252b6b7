use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use otfs_nn::checkpoint::{read_network, write_network};
use otfs_nn::{Network, Scalar};
use otfs_radar::correlator::{write_heatmap_csv, write_heatmap_pgm};
use otfs_radar::dataset::simulate_scene;
use otfs_radar::eval::{comparative_oracles, write_report_csv, ExperimentOptions, OracleOutcome};
use otfs_radar::models::{mean_map_mse, GanTrainer, PairedMaps, PredictorTrainer};
use otfs_radar::rng::sub_seed;
use otfs_radar::{
    generate_dataset, map_probe_symbols, normalize_map, pick_peaks, read_dataset, run_experiment, write_dataset,
    Dataset, DiscriminatorNet, Estimator, EvalSet, GeneratorNet, NoiseSpec, Pipeline, PredictorNet, SnrSetting, Target,
    TargetSet, Widths,
};

use crate::{gradcheck, Cli, CliError, CnnMode, Command, RunConfig};

const GENERATOR: &str = "generator.ckpt";
const DISCRIMINATOR: &str = "discriminator.ckpt";
const GAN_LOG: &str = "gan_log.csv";

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Command::GradCheck = cli.command {
        return grad_check();
    }
    let cfg = cli.config()?;
    match &cli.command {
        Command::Generate => generate(&cfg),
        Command::TrainGan { resume } => train_gan(&cfg, *resume),
        Command::TrainCnn { mode, resume } => train_cnn(&cfg, *mode, *resume),
        Command::Evaluate { assert } => evaluate(&cfg, *assert),
        Command::Heatmap {
            dataset,
            index,
            scene,
            noiseless,
            out,
        } => match scene {
            Some(s) => heatmap_scene(&cfg, s, *noiseless, out),
            None => heatmap_dataset(&cfg, dataset.as_deref(), *index, out),
        },
        Command::GradCheck => unreachable!(),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes to a sibling temp file, then renames into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = with_suffix(path, ".partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn require(paths: &[PathBuf]) -> Result<(), CliError> {
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| format!("missing {}", p.display()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(missing.join("\n")))
    }
}

/// Reads a dataset and checks its geometry against the config.
fn load_dataset(cfg: &RunConfig, path: &Path) -> Result<Dataset, CliError> {
    require(&[path.to_path_buf()])?;
    let ds = read_dataset(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let h = &ds.header;
    if (h.m as usize, h.n as usize, h.targets as usize) != (cfg.m, cfg.n, cfg.targets) {
        return Err(CliError::Config(format!(
            "{} holds M={} N={} P={}, config says M={} N={} P={}",
            path.display(),
            h.m,
            h.n,
            h.targets,
            cfg.m,
            cfg.n,
            cfg.targets
        )));
    }
    Ok(ds)
}

fn save_network<T: Scalar>(path: &Path, net: &Network<T>, epoch: u32) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_network(&mut buf, net, epoch)?;
    write_atomic(path, &buf)
}

fn load_network(path: &Path) -> Result<(Network<f32>, u32), CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    read_network(std::io::BufReader::new(file)).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_generator(cfg: &RunConfig) -> Result<(GeneratorNet, u32), CliError> {
    let path = cfg.path(GENERATOR);
    let (net, epoch) = load_network(&path)?;
    let g = GeneratorNet::from_network(net, cfg.n, cfg.m)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok((g, epoch))
}

fn load_predictor(cfg: &RunConfig, path: &Path) -> Result<(PredictorNet, u32), CliError> {
    let (net, epoch) = load_network(path)?;
    let pr = PredictorNet::from_network(net, cfg.m, cfg.n)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if pr.targets != cfg.targets {
        return Err(CliError::Config(format!(
            "{} predicts P={} targets, config says P={}",
            path.display(),
            pr.targets,
            cfg.targets
        )));
    }
    Ok((pr, epoch))
}

/// Per-epoch CSV log, rewritten in full after every epoch.
struct EpochLog {
    path: PathBuf,
    header: &'static str,
    rows: Vec<String>,
}

impl EpochLog {
    /// Keeps the first `epochs` rows of an existing log when resuming.
    fn open(path: PathBuf, header: &'static str, keep: u32) -> Self {
        let rows = if keep == 0 {
            Vec::new()
        } else {
            fs::read_to_string(&path)
                .map(|t| t.lines().skip(1).take(keep as usize).map(String::from).collect())
                .unwrap_or_default()
        };
        Self { path, header, rows }
    }

    fn push(&mut self, row: String) -> Result<(), CliError> {
        self.rows.push(row);
        let mut text = format!("{}\n", self.header);
        for r in &self.rows {
            text.push_str(r);
            text.push('\n');
        }
        write_atomic(&self.path, text.as_bytes())
    }
}

fn views(v: &[Vec<f32>]) -> Vec<&[f32]> {
    v.iter().map(|m| m.as_slice()).collect()
}

fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.frame()?;
    create_dir(&cfg.work_dir)?;
    eprintln!("generating {} training samples ({})", cfg.train_samples, cfg.snr_mode());
    let train = generate_dataset(&p, cfg.targets, cfg.snr, cfg.clean_snr_db, cfg.train_samples, cfg.seed)?;
    write_dataset(&train, &cfg.train_path())?;
    let mut labels = Vec::new();
    train.write_labels_csv(&mut labels)?;
    write_atomic(&cfg.path("train_labels.csv"), &labels)?;
    println!(
        "train: {} samples, P={}, {}, clean leg {} dB, seed {} -> {}",
        cfg.train_samples,
        cfg.targets,
        cfg.snr_mode(),
        cfg.clean_snr_db,
        cfg.seed,
        cfg.train_path().display()
    );
    for &snr in &cfg.snr_grid {
        let test = generate_dataset(
            &p,
            cfg.targets,
            SnrSetting::Fixed(snr),
            cfg.clean_snr_db,
            cfg.test_samples,
            cfg.test_seed(),
        )?;
        let path = cfg.test_path(snr);
        write_dataset(&test, &path)?;
        println!(
            "test:  {} samples at {snr} dB, seed {} -> {}",
            cfg.test_samples,
            cfg.test_seed(),
            path.display()
        );
    }
    Ok(())
}

fn corrupted_and_clean(ds: &Dataset) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
    ds.records
        .iter()
        .map(|r| (r.corrupted.clone(), r.clean.clone()))
        .unzip()
}

fn train_gan(cfg: &RunConfig, resume: bool) -> Result<(), CliError> {
    let ds = load_dataset(cfg, &cfg.train_path())?;
    let (x, y) = corrupted_and_clean(&ds);
    let (xv, yv) = (views(&x), views(&y));
    let data = PairedMaps::new(&xv, &yv)?;
    let (gp, dp) = (cfg.path(GENERATOR), cfg.path(DISCRIMINATOR));
    let mut trainer = if resume && gp.is_file() && dp.is_file() {
        let (g, ge) = load_generator(cfg)?;
        let (dn, de) = load_network(&dp)?;
        if ge != de {
            return Err(CliError::Runtime(format!(
                "generator is at epoch {ge} but discriminator at {de}"
            )));
        }
        let d = DiscriminatorNet::from_network(dn, cfg.n, cfg.m)?;
        eprintln!("resuming GAN training after epoch {ge}");
        GanTrainer::resume(g, d, cfg.gan(), ge)
    } else {
        GanTrainer::new(cfg.n, cfg.m, &Widths::full(), cfg.gan())?
    };
    let mut log = EpochLog::open(cfg.path(GAN_LOG), "epoch,d_loss,g_adv_loss,g_rec_loss", trainer.epoch);
    while (trainer.epoch as usize) < cfg.gan_epochs {
        let e = trainer.train_epoch(data)?;
        save_network(&gp, &trainer.generator.net, e.epoch)?;
        save_network(&dp, &trainer.discriminator.net, e.epoch)?;
        log.push(format!("{},{},{},{}", e.epoch, e.d_loss, e.g_adv_loss, e.g_rec_loss))?;
        eprintln!(
            "gan epoch {}/{}: d {:.4} adv {:.4} rec {:.5}",
            e.epoch, cfg.gan_epochs, e.d_loss, e.g_adv_loss, e.g_rec_loss
        );
    }
    println!("generator -> {}", gp.display());
    Ok(())
}

fn predictor_name(mode: CnnMode) -> &'static str {
    match mode {
        CnnMode::TwoStage => "cnn_two_stage",
        _ => "cnn_only",
    }
}

fn train_cnn(cfg: &RunConfig, mode: CnnMode, resume: bool) -> Result<(), CliError> {
    let mode = match mode {
        CnnMode::Auto if cfg.path(GENERATOR).is_file() => CnnMode::TwoStage,
        CnnMode::Auto => CnnMode::CnnOnly,
        m => m,
    };
    let name = predictor_name(mode);
    let ds = load_dataset(cfg, &cfg.train_path())?;
    let inputs: Vec<Vec<f32>> = if mode == CnnMode::TwoStage {
        require(&[cfg.path(GENERATOR)])?;
        let (mut g, _) = load_generator(cfg)?;
        eprintln!("denoising {} training maps", ds.len());
        let x: Vec<Vec<f32>> = ds.records.iter().map(|r| r.corrupted.clone()).collect();
        g.denoise_maps(&views(&x), cfg.eval_batch)?
    } else {
        ds.records.iter().map(|r| r.corrupted.clone()).collect()
    };
    let labels: Vec<Vec<f32>> = ds.records.iter().map(|r| r.label.clone()).collect();
    let (iv, lv) = (views(&inputs), views(&labels));
    let path = cfg.path(&format!("{name}.ckpt"));
    let mut trainer = if resume && path.is_file() {
        let (pr, epoch) = load_predictor(cfg, &path)?;
        eprintln!("resuming {name} after epoch {epoch}");
        PredictorTrainer::resume(pr, cfg.cnn(), epoch)
    } else {
        PredictorTrainer::new(cfg.m, cfg.n, cfg.targets, &Widths::full(), cfg.cnn())?
    };
    let mut log = EpochLog::open(
        cfg.path(&format!("{name}_log.csv")),
        "epoch,train_loss,val_loss,val_index_rmse",
        trainer.epoch,
    );
    while (trainer.epoch as usize) < cfg.cnn_epochs {
        let e = trainer.train_epoch(&iv, &lv)?;
        save_network(&path, &trainer.predictor.net, e.epoch)?;
        log.push(format!(
            "{},{},{},{}",
            e.epoch, e.train_loss, e.val_loss, e.val_index_rmse
        ))?;
        eprintln!(
            "{name} epoch {}/{}: train {:.5} val {:.5} val rmse {:.3} cells",
            e.epoch, cfg.cnn_epochs, e.train_loss, e.val_loss, e.val_index_rmse
        );
    }
    println!("{name} -> {}", path.display());
    Ok(())
}

/// Per-set and pooled reconstruction error with and without the generator.
pub struct DenoiseRow {
    pub snr_db: Option<f64>,
    pub mse_corrupted: f64,
    pub mse_denoised: f64,
}

fn evaluate(cfg: &RunConfig, assert: bool) -> Result<(), CliError> {
    let p = cfg.frame()?;
    let wants = |e: Estimator| cfg.estimators.contains(&e);
    let mut needed: Vec<PathBuf> = cfg.snr_grid.iter().map(|&s| cfg.test_path(s)).collect();
    if wants(Estimator::TwoStage) {
        needed.push(cfg.path(GENERATOR));
        needed.push(cfg.path("cnn_two_stage.ckpt"));
    }
    if wants(Estimator::CnnOnly) {
        needed.push(cfg.path("cnn_only.ckpt"));
    }
    require(&needed)?;

    let mut generator = if wants(Estimator::TwoStage) {
        Some(load_generator(cfg)?.0)
    } else {
        None
    };
    let mut two_stage = if wants(Estimator::TwoStage) {
        Some(load_predictor(cfg, &cfg.path("cnn_two_stage.ckpt"))?.0)
    } else {
        None
    };
    let mut cnn_only = if wants(Estimator::CnnOnly) {
        Some(load_predictor(cfg, &cfg.path("cnn_only.ckpt"))?.0)
    } else {
        None
    };

    let mut sets = Vec::new();
    let mut cleans = Vec::new();
    for &snr in &cfg.snr_grid {
        let ds = load_dataset(cfg, &cfg.test_path(snr))?;
        let (maps, clean) = corrupted_and_clean(&ds);
        sets.push(EvalSet {
            snr_db: Some(snr),
            maps,
            labels: ds
                .records
                .iter()
                .map(|r| r.label.iter().map(|&v| v as f64).collect())
                .collect(),
        });
        cleans.push(clean);
    }

    let mut denoise = Vec::new();
    if let Some(g) = generator.as_mut() {
        let (mut sum_c, mut sum_d, mut count) = (0.0, 0.0, 0usize);
        for (set, clean) in sets.iter().zip(&cleans) {
            let x = views(&set.maps);
            let cv = views(clean);
            let den = g.denoise_maps(&x, cfg.eval_batch)?;
            let (mc, md) = (mean_map_mse(&x, &cv)?, mean_map_mse(&views(&den), &cv)?);
            sum_c += mc * x.len() as f64;
            sum_d += md * x.len() as f64;
            count += x.len();
            denoise.push(DenoiseRow {
                snr_db: set.snr_db,
                mse_corrupted: mc,
                mse_denoised: md,
            });
        }
        denoise.push(DenoiseRow {
            snr_db: None,
            mse_corrupted: sum_c / count as f64,
            mse_denoised: sum_d / count as f64,
        });
    }

    let mut pipeline = Pipeline {
        generator: generator.as_mut(),
        two_stage: two_stage.as_mut(),
        cnn_only: cnn_only.as_mut(),
    };
    let opts = ExperimentOptions {
        matching: cfg.matching,
        round: cfg.round,
        batch_size: cfg.eval_batch,
    };
    let reports = run_experiment(&p, cfg.targets, &sets, &cfg.estimators, &mut pipeline, &opts)?;

    let mut buf = Vec::new();
    write_report_csv(&mut buf, &reports)?;
    write_atomic(&cfg.path("report.csv"), &buf)?;
    if !denoise.is_empty() {
        let mut text = String::from("snr_db,mse_corrupted,mse_denoised\n");
        for d in &denoise {
            let snr = d.snr_db.map(|s| s.to_string()).unwrap_or_default();
            text.push_str(&format!("{snr},{},{}\n", d.mse_corrupted, d.mse_denoised));
        }
        write_atomic(&cfg.path("denoise.csv"), text.as_bytes())?;
    }

    let fmt_ref = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    println!(
        "{:<14} {:>7} {:>6} {:>12} {:>12} {:>10} {:>10}",
        "estimator", "snr_db", "N_S", "range_m", "vel_mps", "ref_m", "ref_mps"
    );
    for r in &reports {
        println!(
            "{:<14} {:>7} {:>6} {:>12.3} {:>12.3} {:>10} {:>10}",
            r.estimator.tag(),
            r.snr_db.map(|s| s.to_string()).unwrap_or_else(|| "mixed".into()),
            r.samples,
            r.range_rmse_m,
            r.velocity_rmse_mps,
            fmt_ref(r.paper_ref_range_m),
            fmt_ref(r.paper_ref_velocity_mps),
        );
    }
    println!("matching: {}, rounded: {}", cfg.matching.tag(), cfg.round);

    let mut oracles = comparative_oracles(&reports);
    oracles.extend(denoising_oracles(&denoise));
    let mut failed = Vec::new();
    for o in &oracles {
        let verdict = match o.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "n/a",
        };
        println!("oracle {:<22} {verdict:<4} {}", o.name, o.detail);
        if o.passed == Some(false) {
            failed.push(o.name);
        }
    }
    println!("report -> {}", cfg.path("report.csv").display());
    if assert && !failed.is_empty() {
        return Err(CliError::Oracle(failed.join(", ")));
    }
    Ok(())
}

/// Mean map MSE after denoising below the MSE of the raw input, pooled over
/// all test sets and at −20 dB.
pub fn denoising_oracles(rows: &[DenoiseRow]) -> Vec<OracleOutcome> {
    let mut out = Vec::new();
    for (name, want) in [("denoising_gain", None), ("denoising_gain_-20dB", Some(-20.0))] {
        let row = rows.iter().find(|r| match (r.snr_db, want) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
            _ => false,
        });
        out.push(match row {
            Some(r) => OracleOutcome {
                name,
                passed: Some(r.mse_denoised < r.mse_corrupted),
                detail: format!("MSE denoised {:.5} vs corrupted {:.5}", r.mse_denoised, r.mse_corrupted),
            },
            None => OracleOutcome {
                name,
                passed: None,
                detail: "needs a generator and the matching test set".into(),
            },
        });
    }
    out
}

fn write_maps(out: &Path, n: usize, m: usize, legs: [(&str, &[f64]); 2]) -> Result<(), CliError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    for (leg, values) in legs {
        let mut pgm = Vec::new();
        write_heatmap_pgm(&mut pgm, values, n, m)?;
        write_atomic(&with_suffix(out, &format!("_{leg}.pgm")), &pgm)?;
        let mut csv = Vec::new();
        write_heatmap_csv(&mut csv, values, n, m)?;
        write_atomic(&with_suffix(out, &format!("_{leg}.csv")), &csv)?;
    }
    println!(
        "wrote {0}_clean.pgm, {0}_clean.csv, {0}_corrupted.pgm, {0}_corrupted.csv",
        out.display()
    );
    Ok(())
}

fn heatmap_dataset(cfg: &RunConfig, dataset: Option<&Path>, index: usize, out: &Path) -> Result<(), CliError> {
    let path = dataset
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.test_path(cfg.snr_grid[0]));
    require(std::slice::from_ref(&path))?;
    let ds = read_dataset(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let Some(r) = ds.records.get(index) else {
        return Err(CliError::Usage(format!(
            "index {index} out of range, {} holds {} samples",
            path.display(),
            ds.len()
        )));
    };
    let (n, m) = (ds.header.n as usize, ds.header.m as usize);
    let clean: Vec<f64> = r.clean.iter().map(|&v| v as f64).collect();
    let corrupted: Vec<f64> = r.corrupted.iter().map(|&v| v as f64).collect();
    println!("sample {index}: seed {}, {} dB, label {:?}", r.seed, r.snr_db, r.label);
    write_maps(out, n, m, [("clean", &clean), ("corrupted", &corrupted)])
}

/// Parses `delay:doppler,delay:doppler,…`.
fn parse_scene(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(',')
        .map(|pair| {
            let (d, k) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("--scene entry {pair:?} is not delay:doppler")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| CliError::Usage(format!("--scene entry {pair:?}: {e}")))
            };
            Ok((parse(d)?, parse(k)?))
        })
        .collect()
}

/// Equal-power targets with zero phase at the given cells.
fn heatmap_scene(cfg: &RunConfig, scene: &str, noiseless: bool, out: &Path) -> Result<(), CliError> {
    let p = cfg.frame()?;
    let cells = parse_scene(scene)?;
    let amp = 1.0 / (cells.len() as f64).sqrt();
    let targets = cells
        .iter()
        .map(|&(delay, doppler)| Target {
            delay,
            doppler,
            gain: Complex64::new(amp, 0.0),
        })
        .collect();
    let ts = TargetSet::new(&p, targets).map_err(|e| CliError::Usage(e.to_string()))?;
    let (corrupted, clean) = if noiseless {
        (NoiseSpec::noiseless(), NoiseSpec::noiseless())
    } else {
        let snr = cfg.snr.bounds().0;
        (
            NoiseSpec {
                snr_db: snr,
                seed: sub_seed(cfg.seed, 3),
            },
            NoiseSpec {
                snr_db: cfg.clean_snr_db,
                seed: sub_seed(cfg.seed, 4),
            },
        )
    };
    let probe = map_probe_symbols(&p, sub_seed(cfg.seed, 0));
    let maps = simulate_scene(&p, &probe, &ts, corrupted, clean)?;
    let peaks = pick_peaks(&maps.clean, ts.len())?;
    let cells: Vec<(usize, usize)> = peaks.iter().map(|pk| (pk.delay, pk.doppler)).collect();
    println!("clean-map peaks (delay, doppler): {cells:?}");
    let (c, x) = (normalize_map(&maps.clean), normalize_map(&maps.corrupted));
    write_maps(out, p.n, p.m, [("clean", &c.values), ("corrupted", &x.values)])
}

fn grad_check() -> Result<(), CliError> {
    let rows = gradcheck::suite();
    println!("{:<16} {:>12} {:>8}  worst", "case", "max_rel_err", "checked");
    for r in &rows {
        println!(
            "{:<16} {:>12.3e} {:>8}  {} {}",
            r.name,
            r.max_relative_error,
            r.checked,
            r.worst,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        println!("all gradients within {:e}", gradcheck::TOLERANCE);
        Ok(())
    } else {
        Err(CliError::Oracle(format!("gradient check: {}", failed.join(", "))))
    }
}
