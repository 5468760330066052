use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use interseg_core::io::{read_grid, read_mask, write_grid, write_mask, Dtype};
use interseg_core::seeds::parse_seeds;
use interseg_core::synth::{sample, BlobParams};
use serde_json::Value;

fn interseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interseg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = interseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    interseg(args).status.code().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let s = sample(&BlobParams::default(), seed);
        write_grid(root.join("image.sgrid"), &s.image, Dtype::F32).unwrap();
        write_mask(root.join("gt.sgrid"), &s.gt, s.image.spacing()).unwrap();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).to_str().unwrap().to_string()
    }
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn simulate_then_pipeline_with_robot() {
    let f = Fixture::new(5);
    ok(&["simulate-clicks", "--gt", &f.path("gt.sgrid"), "--seed", "3", "--out", &f.path("points.json")]);
    let pts = parse_seeds(&std::fs::read_to_string(f.path("points.json")).unwrap()).unwrap();
    assert!(pts.len() >= 4);

    let report = json(&ok(&[
        "pipeline",
        "--image",
        &f.path("image.sgrid"),
        "--points",
        &f.path("points.json"),
        "--gt",
        &f.path("gt.sgrid"),
        "--robot",
        "--robot-rounds",
        "3",
        "--out",
        &f.path("mask.sgrid"),
        "--png",
        &f.path("mask.png"),
    ]));
    assert_eq!(report["working_dims"], serde_json::json!([64, 64]));
    assert_eq!(report["margin_points"].as_array().unwrap().len(), pts.len());
    let stages: Vec<&str> = report["stage1_timings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["bbox", "crop_normalize_resample", "encode", "provider", "threshold_paste"]);
    assert!(report["rounds"].as_array().unwrap().len() <= 3);
    assert!(Path::new(&f.path("mask.png")).exists());

    let m = json(&ok(&["metrics", "--pred", &f.path("mask.sgrid"), "--gt", &f.path("gt.sgrid")]));
    let last = report["rounds"]
        .as_array()
        .unwrap()
        .last()
        .map(|r| r["scores"]["dice"].as_f64().unwrap())
        .unwrap_or(report["stage1_scores"]["dice"].as_f64().unwrap());
    assert_eq!(m["dice"].as_f64().unwrap(), last);
    assert!(m["dice"].as_f64().unwrap() > 0.95);
}

#[test]
fn encode_methods() {
    let f = Fixture::new(6);
    std::fs::write(f.path("seeds.json"), r#"[{"coords": [40, 40], "label": "fg"}]"#).unwrap();
    for (method, extra) in [("egd", None), ("geodesic", Some(["--threshold", "0.4"])), ("gaussian", Some(["--sigma", "6"]))] {
        let image = f.path("image.sgrid");
        let seeds = f.path("seeds.json");
        let out = f.path("cue.sgrid");
        let mut args = vec!["encode", "--image", &image, "--seeds", &seeds, "--method", method, "--out", &out];
        if let Some(e) = &extra {
            args.extend(e.iter().copied());
        }
        ok(&args);
        let cue = read_grid(&out).unwrap();
        assert_eq!(cue.dims(), &[96, 96]);
        assert!(cue.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let at_seed = cue.get(&[40, 40]).unwrap();
        if method == "egd" || method == "gaussian" {
            assert!((at_seed - 1.0).abs() < 1e-6, "{method}: {at_seed}");
        } else {
            assert_eq!(at_seed, 0.0);
        }
    }
    let bad = code(&[
        "encode",
        "--image",
        &f.path("image.sgrid"),
        "--seeds",
        &f.path("seeds.json"),
        "--method",
        "sobel",
        "--out",
        &f.path("x.sgrid"),
    ]);
    assert_eq!(bad, 2);
}

#[test]
fn refine_honors_clicks() {
    let f = Fixture::new(7);
    ok(&["simulate-clicks", "--gt", &f.path("gt.sgrid"), "--out", &f.path("points.json")]);
    let pts = parse_seeds(&std::fs::read_to_string(f.path("points.json")).unwrap()).unwrap();
    let c = &pts[0].coords;
    let clicks = format!(r#"[{{"coords": [{}, {}], "label": "bg"}}]"#, c[0], c[1]);
    std::fs::write(f.path("clicks.json"), clicks).unwrap();
    let report = json(&ok(&[
        "refine",
        "--image",
        &f.path("image.sgrid"),
        "--seeds",
        &f.path("points.json"),
        "--clicks",
        &f.path("clicks.json"),
        "--lambda",
        "5",
        "--sigma",
        "0.1",
        "--out",
        &f.path("mask.sgrid"),
    ]));
    assert!(report["energy"].is_number());
    let (mask, _) = read_mask(f.path("mask.sgrid")).unwrap();
    assert!(!mask.get(c).unwrap());
}

#[test]
fn exit_codes() {
    let f = Fixture::new(8);
    let missing = f.path("nope.sgrid");
    assert_eq!(code(&["metrics", "--pred", &missing, "--gt", &f.path("gt.sgrid")]), 3);
    assert_eq!(code(&["metrics", "--pred", &f.path("gt.sgrid")]), 2);
    assert_eq!(
        code(&["metrics", "--pred", &f.path("gt.sgrid"), "--gt", &f.path("gt.sgrid"), "--spacing", "1"]),
        2
    );
    assert_eq!(
        code(&["pipeline", "--image", &f.path("image.sgrid"), "--prob", "cnn", "--gt", &f.path("gt.sgrid"), "--out", &f.path("m.sgrid")]),
        2
    );
    assert_eq!(
        code(&["pipeline", "--image", &f.path("image.sgrid"), "--out", &f.path("m.sgrid")]),
        2
    );
    std::fs::write(f.path("bad.json"), r#"{"pipelin": {}}"#).unwrap();
    assert_eq!(code(&["--config", &f.path("bad.json"), "simulate-clicks", "--gt", &f.path("gt.sgrid")]), 2);
    assert_eq!(code(&["--config", &missing, "simulate-clicks", "--gt", &f.path("gt.sgrid")]), 3);
    std::fs::write(f.path("image.sgrid"), b"garbage").unwrap();
    assert_eq!(code(&["pipeline", "--image", &f.path("image.sgrid"), "--gt", &f.path("gt.sgrid"), "--out", &f.path("m.sgrid")]), 2);
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new(9);
    std::fs::write(
        f.path("cfg.json"),
        r#"{"pipeline": {"working_dims": [32, 32]}, "margin_points": {"inward_offset": 2, "bbox_margin": 4}}"#,
    )
    .unwrap();
    let base = [
        "--config",
        &f.path("cfg.json"),
        "pipeline",
        "--image",
        &f.path("image.sgrid"),
        "--gt",
        &f.path("gt.sgrid"),
        "--out",
        &f.path("m.sgrid"),
    ];
    let from_file = json(&ok(&base));
    assert_eq!(from_file["working_dims"], serde_json::json!([32, 32]));
    let mut args = base.to_vec();
    args.extend(["--working-dims", "48,40"]);
    let flagged = json(&ok(&args));
    assert_eq!(flagged["working_dims"], serde_json::json!([48, 40]));
}

#[test]
fn file_provider() {
    let f = Fixture::new(10);
    let (gt, _) = read_mask(f.path("gt.sgrid")).unwrap();
    write_grid(f.path("prob.sgrid"), &gt.to_grid(), Dtype::F32).unwrap();
    let prob = format!("file:{}", f.path("prob.sgrid"));
    let report = json(&ok(&[
        "pipeline",
        "--image",
        &f.path("image.sgrid"),
        "--gt",
        &f.path("gt.sgrid"),
        "--prob",
        &prob,
        "--out",
        &f.path("m.sgrid"),
    ]));
    assert!(report["stage1_scores"]["dice"].as_f64().unwrap() > 0.97);
}

#[test]
fn bench_and_robot_eval() {
    let f = Fixture::new(11);
    let csv = ok(&["bench", "--count", "2", "--seed", "4"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image,method,parameter,dice,assd");
    assert_eq!(lines.len(), 1 + 2 * 13);

    ok(&["robot-eval", "--count", "3", "--rounds", "2", "--clicks", "2", "--out", &f.path("robot.json")]);
    let s = json(&std::fs::read_to_string(f.path("robot.json")).unwrap());
    assert_eq!(s["images"], 3);
    assert_eq!(s["rounds"], 2);
    assert_eq!(s["trajectories"].as_array().unwrap().len(), 3);

    let dir = tempfile::tempdir().unwrap();
    for seed in [1, 2] {
        let s = sample(&BlobParams::default(), seed);
        write_grid(dir.path().join(format!("b{seed}.image.sgrid")), &s.image, Dtype::F32).unwrap();
        write_mask(dir.path().join(format!("b{seed}.gt.sgrid")), &s.gt, s.image.spacing()).unwrap();
    }
    let csv = ok(&["bench", "--corpus-dir", dir.path().to_str().unwrap()]);
    assert!(csv.lines().any(|l| l.starts_with("b2,egd,,")));
}
