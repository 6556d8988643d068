mod common;

use std::fs;

use common::{ok, read_csv, run, write_checkpoint};
use neures_core::analysis::{read_wav, rms};
use neures_core::config::RunConfig;
use neures_core::dataset::Dataset;
use neures_core::neural::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use neures_core::neural::train::{evaluate, TrainData, Trainer};
use neures_core::neural::Model;
use serde_json::Value;

fn json(path: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn dataset_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["dataset", "--out", "a.nrwb"]));
    ok(&run(dir.path(), &["dataset", "--out", "b.nrwb"]));
    let a = fs::read(dir.path().join("a.nrwb")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.nrwb")).unwrap());
    ok(&run(
        dir.path(),
        &["dataset", "--out", "c.nrwb", "--seed", "6"],
    ));
    assert_ne!(a, fs::read(dir.path().join("c.nrwb")).unwrap());

    let ds = Dataset::from_bytes(&a).unwrap();
    assert_eq!(ds.examples.len(), 12);
    for e in &ds.examples {
        assert!(
            e.grid.contains(e.position),
            "{:?} outside its shape",
            e.position
        );
        assert!(e
            .material
            .normalize()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
        assert!(e.target.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn dataset_with_fixed_shape() {
    let dir = tempfile::tempdir().unwrap();
    let grid = neures_core::modal::ShapeGrid::rectangle(8, 8, 40, 30).unwrap();
    grid.write_pgm(&dir.path().join("plate.pgm")).unwrap();
    ok(&run(
        dir.path(),
        &["dataset", "--shape", "plate.pgm", "--positions", "3"],
    ));
    let ds = Dataset::read(&dir.path().join("data.nrwb")).unwrap();
    assert_eq!(ds.examples.len(), 6);
    assert!(ds.examples.iter().all(|e| e.grid == grid));
}

#[test]
fn training_writes_curve_and_resumes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&run(d, &["dataset"]));
    ok(&run(d, &["train"]));
    let (header, full) = read_csv(&d.join("out/loss.csv"));
    assert_eq!(header, "step,loss");
    assert_eq!(full.len(), 6);
    assert_eq!(
        full.iter()
            .map(|r| r[0].parse::<u64>().unwrap())
            .collect::<Vec<_>>(),
        (1..=6).collect::<Vec<_>>()
    );

    ok(&run(
        d,
        &[
            "train",
            "--until",
            "3",
            "--checkpoint",
            "half.ckpt",
            "--curve",
            "half.csv",
        ],
    ));
    ok(&run(
        d,
        &[
            "train",
            "--resume",
            "half.ckpt",
            "--checkpoint",
            "resumed.ckpt",
            "--curve",
            "rest.csv",
        ],
    ));
    let (_, half) = read_csv(&d.join("half.csv"));
    let (_, rest) = read_csv(&d.join("rest.csv"));
    assert_eq!(half.len(), 3);
    assert_eq!(rest.len(), 3);
    assert_eq!(rest[0][0], "4");
    for (a, b) in half.iter().chain(&rest).zip(&full) {
        let (x, y): (f64, f64) = (a[1].parse().unwrap(), b[1].parse().unwrap());
        assert!((x - y).abs() <= 1e-6 * y.abs(), "step {}: {x} vs {y}", a[0]);
    }
    let resumed = load_checkpoint(&d.join("resumed.ckpt")).unwrap();
    let straight = load_checkpoint(&d.join("model.ckpt")).unwrap();
    assert_eq!(resumed.model.params(), straight.model.params());
    assert_eq!(resumed.training.unwrap().adam.step, 6);

    // a checkpoint without optimizer state cannot be resumed
    save_checkpoint(
        &Checkpoint::model_only(straight.model),
        &d.join("bare.ckpt"),
    )
    .unwrap();
    assert_eq!(
        run(d, &["train", "--resume", "bare.ckpt"]).status.code(),
        Some(2)
    );
}

#[test]
fn reloaded_checkpoint_reproduces_final_loss() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&run(d, &["dataset"]));
    let cfg = RunConfig::load(&d.join("run.toml")).unwrap();
    let ds = Dataset::read(&d.join("data.nrwb")).unwrap();
    let data = TrainData::from_dataset(&ds).unwrap();
    let mut t = Trainer::new(Model::new(cfg.model.clone(), 1).unwrap(), cfg.train.clone()).unwrap();
    t.run(&data, |_, _| {}).unwrap();
    let before = evaluate(&t.model, &data).unwrap();
    let path = d.join("x.ckpt");
    save_checkpoint(&Checkpoint::model_only(t.model.clone()), &path).unwrap();
    let after = evaluate(&load_checkpoint(&path).unwrap().model, &data).unwrap();
    assert_eq!(before, after);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = common::bin()
        .current_dir(d)
        .args(["--config", "absent.toml", "config"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    fs::write(d.join("typo.toml"), "[engine]\nblocksize = 64\n").unwrap();
    let typo = common::bin()
        .current_dir(d)
        .args(["--config", "typo.toml", "config"])
        .output()
        .unwrap();
    assert_eq!(typo.status.code(), Some(2));
    fs::write(d.join("bad.toml"), "[engine]\nblock_size = 0\n").unwrap();
    let bad = common::bin()
        .current_dir(d)
        .args(["--config", "bad.toml", "config"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    // runtime failure: no checkpoint to load
    fs::write(d.join("scene.json"), r#"{"duration": 0.1}"#).unwrap();
    let out = run(d, &["render", "--scene", "scene.json", "--out", "x.wav"]);
    assert_eq!(out.status.code(), Some(3));
    let bogus = common::bin().arg("frobnicate").output().unwrap();
    assert_eq!(bogus.status.code(), Some(2));
}

#[test]
fn config_prints_canonical_form() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&run(dir.path(), &["config"]));
    let parsed = RunConfig::parse(&text).unwrap();
    assert_eq!(
        parsed,
        RunConfig::load(&dir.path().join("run.toml")).unwrap()
    );
    assert_eq!(parsed.canonical(), text);
}

fn render(dir: &std::path::Path, scene: &str, out: &str) -> Vec<f32> {
    fs::write(dir.join("scene.json"), scene).unwrap();
    ok(&run(
        dir,
        &["render", "--scene", "scene.json", "--out", out],
    ));
    let (samples, sr) = read_wav(&dir.join(out)).unwrap();
    assert_eq!(sr, 44100);
    samples
}

#[test]
fn render_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_checkpoint(d);

    let silent = render(d, r#"{"duration": 0.5}"#, "empty.wav");
    assert_eq!(silent.len(), 22050);
    assert!(silent.iter().all(|v| *v == 0.0));

    let hit = |amp: f64| {
        format!(
            r#"{{"duration": 0.5, "events": [{{"type": "hit", "time": 0.1, "x": 0.4, "y": 0.6, "amplitude": {amp}}}]}}"#
        )
    };
    let one = render(d, &hit(1.0), "one.wav");
    let three = render(d, &hit(3.0), "three.wav");
    let to64 = |v: &[f32]| v.iter().map(|x| *x as f64).collect::<Vec<_>>();
    let (r1, r3) = (rms(&to64(&one)), rms(&to64(&three)));
    assert!(r1 > 0.0);
    assert!((r3 / r1 - 3.0).abs() < 1e-5, "rms ratio {}", r3 / r1);
    // nothing sounds before the hit's control tick
    assert!(one[..4410].iter().all(|v| *v == 0.0));

    let busy = r#"{
        "duration": 0.6,
        "texture": {"kind": "fractal", "roughness": 0.4, "size": 64, "seed": 2},
        "schedule": {"youngs_modulus": [[0.0, 5e10], [0.6, 1e10]], "x": [[0.0, 0.3], [0.6, 0.6]]},
        "events": [
            {"type": "hit", "time": 0.05, "x": 0.5, "y": 0.5},
            {"type": "scrape", "points": [[0.2, 0.2, 0.3], [0.21, 0.25, 0.3], [0.22, 0.3, 0.32], [0.23, 0.35, 0.33]]}
        ]
    }"#;
    render(d, busy, "a.wav");
    render(d, busy, "b.wav");
    assert_eq!(
        fs::read(d.join("a.wav")).unwrap(),
        fs::read(d.join("b.wav")).unwrap()
    );

    fs::write(
        d.join("bad.json"),
        r#"{"duration": 1, "events": [{"type": "kick"}]}"#,
    )
    .unwrap();
    let out = run(d, &["render", "--scene", "bad.json", "--out", "bad.wav"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&run(d, &["dataset", "--positions", "2"]));
    write_checkpoint(d);

    ok(&run(d, &["eval", "response"]));
    let (header, rows) = read_csv(&d.join("out/response.csv"));
    assert!(header.starts_with("example,loss,peak0_error"));
    assert_eq!(rows.len(), 4);
    assert_eq!(json(&d.join("out/response.json"))["examples"], 4);

    ok(&run(
        d,
        &["eval", "fig2", "--constant", "--duration", "0.3"],
    ));
    let s = json(&d.join("out/fig2_constant.json"))["similarity"]
        .as_f64()
        .unwrap();
    assert!((s - 1.0).abs() < 1e-6, "self-similarity {s}");

    ok(&run(d, &["eval", "fig2", "--duration", "0.3"]));
    for f in [
        "fig2_neural.wav",
        "fig2_reference.wav",
        "fig2_neural.png",
        "fig2_reference.png",
        "fig2_coefficients.csv",
    ] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let (header, rows) = read_csv(&d.join("out/fig2_neural_spectrogram.csv"));
    assert_eq!(header, "time,freq,db");
    assert!(!rows.is_empty());
    let summary = json(&d.join("out/fig2.json"));
    let sim = summary["similarity"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&sim));

    ok(&run(d, &["eval", "fig3", "--duration", "0.3"]));
    let fig3 = json(&d.join("out/fig3.json"));
    assert_eq!(fig3["ticks"], 300);
    assert!(fig3["outside_ticks"].is_u64());
    let schedule = json(&d.join("out/fig3_schedule.json"));
    let e = schedule["youngs_modulus"].as_array().unwrap();
    let (lo, hi) = neures_core::material::MATERIAL_RANGES[1];
    assert!(e[0][1].as_f64().unwrap() < lo && e[1][1].as_f64().unwrap() > hi);
    assert!(d.join("out/fig3.wav").exists());

    ok(&run(d, &["eval", "fig4", "--steps", "33"]));
    let (header, rows) = read_csv(&d.join("out/fig4.csv"));
    assert!(header.starts_with("coord,inside"));
    assert_eq!(rows.len(), 33);
    let coords: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(coords.windows(2).all(|w| w[1] > w[0]));
}
