use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use saliency_core::encoders::image::{read_pnm, write_pnm};
use saliency_core::metrics::{fixation_density, FixationMap};
use serde_json::Value;

fn dscl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dscl"))
        .args(args)
        .env("DSCL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY_RUN: &str = "\
channels = 4
hidden = 3
depth = 1
scene_width = 6
height = 32
width = 32
distractors = 2
radius = 3
train_samples = 6
val_samples = 3
batch_size = 2
total_steps = 4
lr_decay_every = 2
validate_every = 2
";

#[test]
fn synth_writes_paired_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = dscl(&["synth", "--n", "3", "--out", p(d), "--seed", "5"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("seed = 5"));
    }
    for stem in ["sample_00000", "sample_00001", "sample_00002"] {
        for rel in [format!("images/{stem}.ppm"), format!("fixations/{stem}.csv")] {
            assert_eq!(fs::read(a.join(&rel)).unwrap(), fs::read(b.join(&rel)).unwrap());
        }
    }
    let img = read_pnm(&a.join("images/sample_00000.ppm")).unwrap();
    assert_eq!(img.shape(), &[64, 64, 3]);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out_dir = dir.path().join("out");
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--config", p(&missing), "--out", p(&out_dir)],
        vec!["train", "--out", p(&out_dir)],
        vec!["train", "--preset", "imagenet", "--out", p(&out_dir)],
        vec!["synth", "--n", "1", "--out", p(&out_dir), "--bogus"],
        vec!["synth", "--n", "1", "--out", p(&out_dir), "--mode", "shape"],
        vec!["ablate", "--axis", "width"],
        vec!["gradcheck", "--module", "nope"],
        vec!["frobnicate"],
    ];
    for args in cases {
        assert_eq!(code(&dscl(&args)), 2, "{args:?}");
    }
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_dscl"))
        .args(["gradcheck", "--module", "layers"])
        .env("DSCL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn train_is_reproducible_and_predict_matches_input_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.txt");
    fs::write(&cfg, TINY_RUN).unwrap();
    let runs = [dir.path().join("r1"), dir.path().join("r2")];
    for r in &runs {
        let out = dscl(&["train", "--config", p(&cfg), "--out", p(r), "--seed", "9"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let text = stdout(&out);
        assert!(text.contains("total_steps = 4"));
        assert!(text.contains("seed = 9"));
    }
    let h1 = fs::read(runs[0].join("history.csv")).unwrap();
    let h2 = fs::read(runs[1].join("history.csv")).unwrap();
    assert_eq!(h1, h2);
    let lines: Vec<_> = std::str::from_utf8(&h1).unwrap().lines().collect();
    assert_eq!(lines[0], "step,lr,train_loss,val_nss,val_cc,val_auc");
    assert_eq!(lines.len(), 3);

    let data = dir.path().join("data");
    let out = dscl(&["synth", "--n", "1", "--out", p(&data), "--size", "40"]);
    assert_eq!(code(&out), 0);
    let map = dir.path().join("map.pgm");
    let out = dscl(&[
        "predict",
        "--ckpt",
        p(&runs[0]),
        "--image",
        p(&data.join("images/sample_00000.ppm")),
        "--out",
        p(&map),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = fs::read(&map).unwrap();
    assert!(bytes.starts_with(b"P5\n40 40\n65535\n"));
    let pred = read_pnm(&map).unwrap();
    assert_eq!(pred.shape(), &[40, 40, 1]);
    assert!(pred.data().iter().all(|&v| v >= 0.0));
    assert!((pred.max() - 1.0).abs() < 1e-12);
}

#[test]
fn train_reads_synth_directories() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let val_dir = dir.path().join("val");
    assert_eq!(code(&dscl(&["synth", "--n", "4", "--out", p(&train_dir), "--size", "32", "--distractors", "2"])), 0);
    assert_eq!(
        code(&dscl(&[
            "synth", "--n", "2", "--out", p(&val_dir), "--size", "32", "--distractors", "2",
            "--seed", "50",
        ])),
        0
    );
    let cfg = dir.path().join("run.txt");
    fs::write(
        &cfg,
        format!(
            "{TINY_RUN}train_dir = {}\nval_dir = {}\n",
            train_dir.display(),
            val_dir.display()
        ),
    )
    .unwrap();
    let out = dscl(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("r"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    fs::remove_dir_all(val_dir.join("fixations")).unwrap();
    let out = dscl(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("r2"))]);
    assert_eq!(code(&out), 3);
}

fn write_blurred_truth(dir: &Path, stem: &str, fixations: &FixationMap) {
    let density = fixation_density(fixations, None).unwrap();
    write_pnm(&dir.join(format!("{stem}.pgm")), &density, 16).unwrap();
}

#[test]
fn eval_of_blurred_truth_has_unit_cc_and_mean_row() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred");
    let fix = dir.path().join("fix");
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&fix).unwrap();
    let sets = [
        ("b", vec![(5, 7), (20, 30), (21, 30)]),
        ("a", vec![(10, 10), (12, 40)]),
        ("c", vec![(30, 5), (2, 44), (17, 17), (28, 40)]),
    ];
    for (stem, points) in &sets {
        let f = FixationMap::new(32, 48, points.clone()).unwrap();
        fs::write(fix.join(format!("{stem}.csv")), f.to_csv()).unwrap();
        write_blurred_truth(&pred, stem, &f);
    }
    let out_path = dir.path().join("scores.jsonl");
    let out = dscl(&[
        "eval",
        "--pred",
        p(&pred),
        "--fix",
        p(&fix),
        "--out",
        p(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Value> = fs::read_to_string(&out_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 4);
    let stems: Vec<&str> = rows.iter().map(|r| r["image"].as_str().unwrap()).collect();
    assert_eq!(stems, ["a", "b", "c", "mean"]);
    for r in &rows[..3] {
        assert!(r["cc"].as_f64().unwrap() > 0.9999, "{r}");
        assert!(r["nss"].as_f64().unwrap() > 0.0);
        assert!(r["auc"].as_f64().unwrap() > 0.9);
        assert!(r["sauc"].as_f64().is_some());
    }
    let mean = &rows[3];
    assert_eq!(mean["count"].as_u64(), Some(3));
    for key in ["nss", "cc", "auc", "sauc"] {
        let avg = rows[..3].iter().map(|r| r[key].as_f64().unwrap()).sum::<f64>() / 3.0;
        assert!((mean[key].as_f64().unwrap() - avg).abs() < 1e-12, "{key}");
    }
}

#[test]
fn eval_respects_metric_selection_and_reports_unpaired_files() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred");
    let fix = dir.path().join("fix");
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&fix).unwrap();
    let f = FixationMap::new(16, 16, vec![(3, 3), (8, 12)]).unwrap();
    fs::write(fix.join("x.csv"), f.to_csv()).unwrap();
    write_blurred_truth(&pred, "x", &f);
    let out_path = dir.path().join("s.jsonl");
    let args = [
        "eval",
        "--pred",
        p(&pred),
        "--fix",
        p(&fix),
        "--metrics",
        "nss,cc",
        "--out",
        p(&out_path),
    ];
    assert_eq!(code(&dscl(&args)), 0);
    let first: Value =
        serde_json::from_str(fs::read_to_string(&out_path).unwrap().lines().next().unwrap())
            .unwrap();
    assert!(first.get("nss").is_some() && first.get("cc").is_some());
    assert!(first.get("auc").is_none() && first.get("sauc").is_none());

    write_blurred_truth(&pred, "y", &f);
    assert_eq!(code(&dscl(&args)), 3);
}

#[test]
fn gradcheck_passes() {
    let out = dscl(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(!text.contains("FAIL"));
    assert!(text.contains("end-to-end pipeline"));
}
