use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isw_core::cli::RunConfig;
use isw_core::io::{read_matrix_csv, write_matrix_csv, Heatmap};
use isw_core::pipeline::{load_dataset, save_checkpoint, Metrics, TrainState};

const SMALL_CONFIG: &str = r#"{
  "train": { "total_iterations": 12, "n_phase1_epochs": 1, "batch_size": 2, "seed": 3 },
  "scenes": { "height": 16, "width": 16 },
  "num_source_scenes": 6,
  "num_target_scenes": 4
}"#;

fn isw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isw"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = isw(args);
    assert!(
        out.status.success(),
        "isw {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    source: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("config.json");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let source = root.join("source");
    ok(&[
        "gen-data",
        "--config",
        s(&config),
        "--domain",
        "source",
        "--out",
        s(&source),
    ]);
    Fixture {
        _dir: dir,
        root,
        config,
        source,
    }
}

#[test]
fn gen_data_is_reproducible() {
    let f = fixture();
    let again = f.root.join("again");
    ok(&[
        "gen-data",
        "--config",
        s(&f.config),
        "--domain",
        "source",
        "--out",
        s(&again),
    ]);
    for name in ["images.swt", "labels.swt", "manifest.json"] {
        assert_eq!(
            fs::read(f.source.join(name)).unwrap(),
            fs::read(again.join(name)).unwrap()
        );
    }
    let (scenes, m) = load_dataset(&f.source).unwrap();
    assert_eq!(scenes.len(), 6);
    assert_eq!((m.height, m.width), (16, 16));
}

#[test]
fn isw_run_writes_three_masks() {
    let f = fixture();
    let out = f.root.join("isw");
    ok(&[
        "train",
        "--config",
        s(&f.config),
        "--variant",
        "isw",
        "--data",
        s(&f.source),
        "--out",
        s(&out),
    ]);
    let widths = [16, 32, 32];
    for (l, c) in widths.iter().enumerate() {
        let mask = read_matrix_csv(&out.join(format!("mask_layer{}.csv", l + 1))).unwrap();
        assert_eq!(mask.dim, *c);
        for i in 0..*c {
            for j in 0..=i {
                assert_eq!(mask.get(i, j), 0.0);
            }
        }
        assert!(mask.values.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(out.join(format!("variance_layer{}.csv", l + 1)).exists());
        assert!(out.join(format!("cov_layer{}.csv", l + 1)).exists());
    }
    for name in [
        "log.csv",
        "model.swt",
        "model.json",
        "sensitivity.json",
        "config.resolved.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let log = fs::read_to_string(out.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 13);
    assert!(log.lines().nth(3).unwrap().ends_with("phase1"));
    assert!(log.lines().nth(4).unwrap().ends_with("phase2"));

    let resolved =
        RunConfig::from_json(&fs::read_to_string(out.join("config.resolved.json")).unwrap())
            .unwrap();
    assert_eq!(resolved.train.total_iterations, 12);

    let mask = out.join("mask_layer2.csv");
    let variance = out.join("variance_layer2.csv");
    let rederived = f.root.join("mask2.csv");
    ok(&["mask", "--variance", s(&variance), "--out", s(&rederived)]);
    assert_eq!(fs::read(mask).unwrap(), fs::read(rederived).unwrap());
}

#[test]
fn baseline_run_skips_sensitivity_pass() {
    let f = fixture();
    let out = f.root.join("baseline");
    ok(&[
        "train",
        "--config",
        s(&f.config),
        "--variant",
        "baseline",
        "--data",
        s(&f.source),
        "--out",
        s(&out),
    ]);
    assert!(out.join("model.json").exists());
    assert!(!out.join("sensitivity.json").exists());
    assert!(!out.join("mask_layer1.csv").exists());
    let log = fs::read_to_string(out.join("log.csv")).unwrap();
    for row in log.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(&cols[3..6], ["0", "0", "0"], "{row}");
    }
}

#[test]
fn eval_of_all_background_predictor() {
    let f = fixture();
    let cfg = RunConfig::from_json(SMALL_CONFIG).unwrap();
    let mut state = TrainState::new(cfg.train).unwrap();
    state.net.params_mut().fill(0.0);
    let ckpt = save_checkpoint(&f.root, "zero", &state, &[]).unwrap();
    let out = f.root.join("metrics.json");
    ok(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&f.source),
        "--out",
        s(&out),
    ]);
    let metrics: Metrics = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();

    let (scenes, _) = load_dataset(&f.source).unwrap();
    let mut counts = [0usize; 5];
    for l in scenes.iter().flat_map(|s| &s.labels) {
        counts[*l] += 1;
    }
    let total: usize = counts.iter().sum();
    let background = counts[0] as f64 / total as f64;
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    assert!((metrics.pixel_accuracy - background).abs() < 1e-12);
    assert!((metrics.miou - background / present).abs() < 1e-12);
    assert_eq!(metrics.per_class_iou[0], Some(background));
    for (c, iou) in metrics.per_class_iou.iter().enumerate().skip(1) {
        assert_eq!(*iou, if counts[c] > 0 { Some(0.0) } else { None });
    }
}

#[test]
fn heatmap_of_identity_and_zero() {
    let dir = tempfile::tempdir().unwrap();
    let eye = dir.path().join("eye.csv");
    let mut v = vec![0.0; 16];
    for i in 0..4 {
        v[i * 5] = 1.0;
    }
    write_matrix_csv(&eye, 4, &v).unwrap();
    let pgm = dir.path().join("eye.pgm");
    ok(&["heatmap", "--matrix-csv", s(&eye), "--out", s(&pgm)]);
    let map = Heatmap::read(&pgm).unwrap();
    assert_eq!((map.width, map.height), (4, 4));
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(map.pixels[i * 4 + j], if i == j { 255 } else { 0 });
        }
    }
    assert_eq!(map.mean_off_diagonal(), 0.0);

    let zero = dir.path().join("zero.csv");
    write_matrix_csv(&zero, 3, &[0.0; 9]).unwrap();
    let zpgm = dir.path().join("zero.pgm");
    ok(&[
        "heatmap",
        "--matrix-csv",
        s(&zero),
        "--out",
        s(&zpgm),
        "--log",
    ]);
    assert!(Heatmap::read(&zpgm).unwrap().pixels.iter().all(|&p| p == 0));
}

#[test]
fn exit_codes() {
    let f = fixture();
    let bad_variant = isw(&[
        "train",
        "--config",
        s(&f.config),
        "--variant",
        "nope",
        "--data",
        s(&f.source),
    ]);
    assert_eq!(bad_variant.status.code(), Some(2));

    let typo = f.root.join("typo.json");
    fs::write(&typo, r#"{"train": {"total_iteration": 5}}"#).unwrap();
    let bad_key = isw(&[
        "gen-data",
        "--config",
        s(&typo),
        "--domain",
        "source",
        "--out",
        s(&f.root.join("x")),
    ]);
    assert_eq!(bad_key.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_key.stderr).contains("total_iteration"));

    let missing = isw(&[
        "train",
        "--config",
        s(&f.config),
        "--variant",
        "iw",
        "--data",
        s(&f.root.join("nowhere")),
        "--out",
        s(&f.root.join("o")),
    ]);
    assert_eq!(missing.status.code(), Some(3));

    let args = [
        "gradcheck",
        "--sizes",
        "2,3",
        "--instances",
        "3",
        "--no-network",
    ];
    assert_eq!(isw(&args).status.code(), Some(0));
    let mut corrupt = args.to_vec();
    corrupt.push("--corrupt-gradient");
    assert_eq!(isw(&corrupt).status.code(), Some(1));
}
