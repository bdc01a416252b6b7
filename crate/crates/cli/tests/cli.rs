use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn otfs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfs"))
        .args(args)
        .arg("--work-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

const TINY: [&str; 10] = [
    "--set",
    "train_samples=24",
    "--set",
    "test_samples=8",
    "--snr-grid",
    "-20,-15",
    "--set",
    "gan_batch=8",
    "--set",
    "cnn_batch=8",
];

fn run(dir: &Path, verb: &[&str], extra: &[&str]) -> Output {
    let mut args: Vec<&str> = verb.to_vec();
    args.extend(TINY);
    args.extend(extra);
    otfs(dir, &args)
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn usage_and_config_errors_exit_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("run");
    assert_eq!(code(&otfs(&work, &["--help"])), 0);
    assert_eq!(code(&otfs(&work, &["frobnicate"])), 1);
    assert_eq!(code(&otfs(&work, &["generate", "--set", "bogus=1"])), 1);
    assert_eq!(code(&otfs(&work, &["generate", "--set", "targets=0"])), 1);
    assert_eq!(code(&otfs(&work, &["generate", "--snr-grid", "-20,x"])), 1);
    assert_eq!(code(&otfs(&work, &["generate", "--estimators", "oracle"])), 1);

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\nsnr_range = 0, -20\n").unwrap();
    let out = otfs(&work, &["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("SNR"));
    assert!(!work.exists(), "no output on config error");
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&run(&a, &["generate"], &["--seed", "5"]));
    ok(&run(&b, &["generate"], &["--seed", "5"]));
    for name in [
        "train.otfsdd",
        "test_-20dB.otfsdd",
        "test_-15dB.otfsdd",
        "train_labels.csv",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let c = dir.path().join("c");
    ok(&run(&c, &["generate"], &["--seed", "6"]));
    assert_ne!(
        fs::read(a.join("train.otfsdd")).unwrap(),
        fs::read(c.join("train.otfsdd")).unwrap()
    );
    // the two test sets share scenes and differ only in noise level
    let t20 = otfs_radar::read_dataset(&a.join("test_-20dB.otfsdd")).unwrap();
    let t15 = otfs_radar::read_dataset(&a.join("test_-15dB.otfsdd")).unwrap();
    assert_eq!(t20.records[3].label, t15.records[3].label);
    assert_eq!(t20.records[3].clean, t15.records[3].clean);
    assert_eq!(t20.header.base_seed, 5 + 1_000_000_000);
    // desk-scale preset
    let cfg = <otfs_cli::Cli as clap::Parser>::try_parse_from(["otfs", "--desk-scale", "generate"])
        .unwrap()
        .config()
        .unwrap();
    assert_eq!((cfg.train_samples, cfg.test_samples), (2000, 500));
}

#[test]
fn training_rejects_mismatched_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    ok(&run(w, &["generate"], &[]));
    let out = run(w, &["train-gan"], &["--set", "targets=3"]);
    assert_eq!(code(&out), 1);
    assert!(!w.join("generator.ckpt").exists());
    let out = run(&w.join("missing"), &["train-cnn"], &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.otfsdd"));
}

#[test]
fn full_pipeline_with_resume() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    ok(&run(w, &["generate"], &[]));

    // cnn-only before any generator exists
    ok(&run(w, &["train-cnn"], &["--set", "cnn_epochs=2"]));
    assert!(w.join("cnn_only.ckpt").is_file());
    let log = rows(&w.join("cnn_only_log.csv"));
    assert_eq!(log[0], "epoch,train_loss,val_loss,val_index_rmse");
    assert_eq!(log.len(), 3);

    // interrupted GAN run, then resumed
    ok(&run(w, &["train-gan"], &["--set", "gan_epochs=1"]));
    assert_eq!(rows(&w.join("gan_log.csv")).len(), 2);
    ok(&run(w, &["train-gan", "--resume"], &["--set", "gan_epochs=3"]));
    let log = rows(&w.join("gan_log.csv"));
    assert_eq!(log.len(), 4);
    for (i, row) in log[1..].iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0], (i + 1).to_string());
        assert!(cells[1..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
    }
    let bytes = fs::read(w.join("generator.ckpt")).unwrap();
    let (_, epoch) = otfs_nn::checkpoint::read_network::<f32, _>(&bytes[..]).unwrap();
    assert_eq!(epoch, 3);

    // generator present: auto mode trains the two-stage predictor
    ok(&run(w, &["train-cnn"], &["--set", "cnn_epochs=2"]));
    assert!(w.join("cnn_two_stage.ckpt").is_file());

    let out = run(w, &["evaluate"], &[]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oracle ablation"));
    assert!(stdout.contains("oracle denoising_gain"));
    let report = rows(&w.join("report.csv"));
    assert_eq!(
        report[0],
        "estimator,snr_db,P,N_S,range_rmse_m,velocity_rmse_mps,paper_ref_range_m,paper_ref_velocity_mps,matching,rounded"
    );
    assert_eq!(report.len(), 1 + 2 * 3);
    assert!(report
        .iter()
        .any(|r| r.starts_with("two_stage,-20.0,2,8,") && r.contains(",22.49,14.7,")));
    assert_eq!(rows(&w.join("denoise.csv")).len(), 1 + 3);

    let out = run(w, &["evaluate", "--assert"], &[]);
    assert!(matches!(code(&out), 0 | 3));
}

#[test]
fn evaluate_reports_every_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    ok(&run(w, &["generate"], &[]));
    let out = run(w, &["evaluate"], &[]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["generator.ckpt", "cnn_two_stage.ckpt", "cnn_only.ckpt"] {
        assert!(err.contains(name), "{err}");
    }
    // the baseline needs no checkpoints
    ok(&run(w, &["evaluate"], &["--estimators", "peak_baseline"]));
    assert_eq!(rows(&w.join("report.csv")).len(), 3);
}

/// Minimal P2 reader: header tokens, then `width · height` gray values.
fn read_pgm(text: &str) -> (usize, usize, Vec<u32>) {
    let mut tok = text.split_whitespace();
    assert_eq!(tok.next(), Some("P2"));
    let w: usize = tok.next().unwrap().parse().unwrap();
    let h: usize = tok.next().unwrap().parse().unwrap();
    let max: u32 = tok.next().unwrap().parse().unwrap();
    let px: Vec<u32> = tok.map(|t| t.parse().unwrap()).collect();
    assert_eq!(px.len(), w * h);
    assert!(px.iter().all(|&v| v <= max));
    (w, h, px)
}

#[test]
fn scene_heatmap_shows_both_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out_prefix = dir.path().join("maps/fig3");
    let prefix = out_prefix.to_str().unwrap();
    ok(&otfs(
        dir.path(),
        &["heatmap", "--scene", "2:10,7:17", "--noiseless", "--out", prefix],
    ));

    let csv = rows(&dir.path().join("maps/fig3_clean.csv"));
    assert_eq!(csv.len(), 28);
    let values: Vec<f64> = csv
        .iter()
        .flat_map(|r| {
            let cells: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(cells.len(), 28);
            cells
        })
        .collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut top: Vec<(usize, usize)> = order[..2].iter().map(|&i| (i % 28, i / 28)).collect();
    top.sort();
    assert_eq!(top, vec![(2, 10), (7, 17)]);

    let (w, h, px) = read_pgm(&fs::read_to_string(dir.path().join("maps/fig3_clean.pgm")).unwrap());
    assert_eq!((w, h), (28, 28));
    assert_eq!(px[10 * 28 + 2], 255);
    assert!(dir.path().join("maps/fig3_corrupted.pgm").is_file());
}

#[test]
fn dataset_heatmap_and_index_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    ok(&run(w, &["generate"], &[]));
    let prefix = w.join("h").to_str().unwrap().to_string();
    ok(&run(w, &["heatmap"], &["--index", "7", "--out", &prefix]));
    assert_eq!(rows(&w.join("h_corrupted.csv")).len(), 28);
    let bad = w.join("bad").to_str().unwrap().to_string();
    assert_eq!(code(&run(w, &["heatmap"], &["--index", "8", "--out", &bad])), 1);
    assert!(!w.join("bad_clean.pgm").exists());
    assert_eq!(code(&otfs(w, &["heatmap", "--scene", "2:40", "--out", &bad])), 1);
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = otfs(dir.path(), &["grad-check"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in [
        "conv2d",
        "batchnorm2d",
        "dropout",
        "generator",
        "discriminator",
        "predictor",
    ] {
        assert!(text.contains(name));
    }
}
