use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use salypath::data::{generate, read_pgm, Dataset, SynthConfig};
use salypath::metrics::{FixationSet, SaliencyScores};
use salypath::{ModelConfig, SaliencyMap, SalyPath, Tensor};

fn salypath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salypath")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<(String, Vec<f64>)>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            let mut cells = l.split(',');
            let id = cells.next().unwrap().to_string();
            (id, cells.map(|c| c.parse().unwrap()).collect())
        })
        .collect();
    (header, rows)
}

fn zero_checkpoint(dir: &Path) -> PathBuf {
    let mut model = SalyPath::new(ModelConfig::desk(), 0).unwrap();
    for (_, t) in model.params_mut().iter_mut() {
        *t = Tensor::zeros(t.shape().to_vec());
    }
    let path = dir.join("zero.ckpt");
    model.save(&path).unwrap();
    path
}

/// Single-observer dataset whose maps mark exactly the fixated pixels.
fn fixation_map_dataset(dir: &Path, n: usize) -> Dataset {
    let mut ds = generate(&SynthConfig { observers: 1, ..SynthConfig::new(n, 7, (32, 24)) }).unwrap();
    for sample in &mut ds.samples {
        let fix = FixationSet::from_scanpaths(&sample.scanpaths().unwrap(), 32, 24);
        let mut values = vec![0.0; 32 * 24];
        for &(r, c) in fix.points() {
            values[r * 32 + c] = 1.0;
        }
        sample.map = SaliencyMap::new(32, 24, values).unwrap();
    }
    ds.write(dir).unwrap();
    ds
}

#[test]
fn zero_weight_model_predicts_uniform_map_and_centroid_path() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = zero_checkpoint(dir.path());
    let data = dir.path().join("data");
    generate(&SynthConfig::new(1, 0, (64, 64))).unwrap().write(&data).unwrap();
    let image = data.join("stimuli/synth_0000.ppm");
    let (map, csv) = (dir.path().join("m.pgm"), dir.path().join("p.csv"));
    let out = salypath(&["predict", "--checkpoint", s(&ckpt), "--image", s(&image), "--out-map", s(&map), "--out-scanpath", s(&csv)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let m = read_pgm(&map).unwrap();
    assert!(m.values().iter().all(|&v| v == m.values()[0]));
    assert!((m.values()[0] - 0.5).abs() <= 0.5 / 255.0 + 1e-12);
    let text = fs::read_to_string(&csv).unwrap();
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["index", "x", "y", "x_norm", "y_norm"]);
    assert_eq!(rows.len(), 8);
    for (_, r) in rows {
        assert!((r[2] - 0.375).abs() < 1e-12 && (r[3] - 0.375).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn repeated_prediction_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    SalyPath::new(ModelConfig::desk(), 4).unwrap().save(&ckpt).unwrap();
    let data = dir.path().join("data");
    generate(&SynthConfig::new(3, 2, (64, 64))).unwrap().write(&data).unwrap();
    let manifest = data.join("manifest.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = salypath(&["predict", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--out-dir", s(out_dir)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for id in ["synth_0000", "synth_0001", "synth_0002"] {
        for ext in ["pgm", "csv"] {
            let name = format!("{id}.{ext}");
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn missing_checkpoint_is_a_named_error() {
    let dir = tempfile::tempdir().unwrap();
    let ghost = dir.path().join("nowhere.ckpt");
    let out = salypath(&["predict", "--checkpoint", s(&ghost), "--image", "x.ppm", "--out-map", "m.pgm", "--out-scanpath", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.ckpt"), "{}", stderr(&out));
}

#[test]
fn preset_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = zero_checkpoint(dir.path());
    let out = salypath(&["predict", "--checkpoint", s(&ckpt), "--preset", "paper", "--image", "x.ppm", "--out-map", "m.pgm", "--out-scanpath", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = salypath(&["stats", "--manifest", "m.json", "--frobnicate"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--frobnicate"));
}

#[test]
fn ground_truth_as_prediction_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixation_map_dataset(&data, 4);
    let preds = dir.path().join("preds");
    fs::create_dir_all(&preds).unwrap();
    for i in 0..4 {
        let id = format!("synth_{i:04}");
        fs::copy(data.join(format!("maps/{id}.pgm")), preds.join(format!("{id}.pgm"))).unwrap();
        fs::copy(data.join(format!("scanpaths/{id}_0.csv")), preds.join(format!("{id}.csv"))).unwrap();
    }
    let manifest = data.join("manifest.json");

    let out = salypath(&["eval-saliency", "--manifest", s(&manifest), "--pred-dir", s(&preds)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header, ["image_id", "auc_judd", "auc_borji", "nss", "cc", "sim", "kld"]);
    let (id, mean) = rows.last().unwrap();
    assert_eq!(id, "MEAN");
    assert!((mean[0] - 1.0).abs() < 1e-12);
    assert!((mean[3] - 1.0).abs() < 1e-12);
    assert!((mean[4] - 1.0).abs() < 1e-12);
    assert!(mean[5].abs() < 1e-12);

    let out = salypath(&["eval-scanpath", "--manifest", s(&manifest), "--pred-dir", s(&preds)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header[1..6], ["mm_shape", "mm_dir", "mm_len", "mm_pos", "mm_mean"]);
    let mean = &rows.last().unwrap().1;
    for v in &mean[..5] {
        assert!((v - 1.0).abs() < 1e-12, "{mean:?}");
    }
}

#[test]
fn empty_manifest_gives_header_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.json");
    fs::write(&manifest, r#"{"name":"empty","width":8,"height":8,"records":[]}"#).unwrap();
    for cmd in ["eval-saliency", "eval-scanpath"] {
        let out = salypath(&[cmd, "--manifest", s(&manifest), "--pred-dir", s(dir.path())]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
    }
}

#[test]
fn mean_row_averages_five_images() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let ds = generate(&SynthConfig::new(5, 3, (64, 64))).unwrap();
    ds.write(&data).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    SalyPath::new(ModelConfig::desk(), 1).unwrap().save(&ckpt).unwrap();
    let manifest = data.join("manifest.json");
    let preds = dir.path().join("preds");
    let out = salypath(&["predict", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--out-dir", s(&preds)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let report = dir.path().join("sal.csv");
    let out = salypath(&["eval-saliency", "--manifest", s(&manifest), "--pred-dir", s(&preds), "--seed", "3", "--out", s(&report)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (_, rows) = parse_csv(&fs::read_to_string(&report).unwrap());
    assert_eq!(rows.len(), 6);
    for (k, (id, values)) in rows[..5].iter().enumerate() {
        let sample = &ds.samples[k];
        assert_eq!(id, &sample.id);
        let pred = read_pgm(preds.join(format!("{id}.pgm"))).unwrap();
        let fix = FixationSet::from_scanpaths(&sample.scanpaths().unwrap(), 64, 64);
        let want = SaliencyScores::evaluate(&pred, &sample.map, &fix, 100, 3).unwrap().values();
        for (a, b) in values.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{id}: {a} vs {b}");
        }
    }
    for c in 0..6 {
        let avg = rows[..5].iter().map(|r| r.1[c]).sum::<f64>() / 5.0;
        assert!((rows[5].1[c] - avg).abs() < 1e-12);
    }
}

#[test]
fn missing_prediction_exits_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fixation_map_dataset(&data, 2);
    let preds = dir.path().join("preds");
    fs::create_dir_all(&preds).unwrap();
    fs::copy(data.join("maps/synth_0000.pgm"), preds.join("synth_0000.pgm")).unwrap();
    let out = salypath(&["eval-saliency", "--manifest", s(&data.join("manifest.json")), "--pred-dir", s(&preds)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("synth_0001.pgm"));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("synth_0000,") && stdout.contains("MEAN,"));
}
