use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use tilepath::augment::{apply_logged, AffineMatrix, Interpolation};
use tilepath::image::Image;
use tilepath::network::{build_architecture, save_weights, ArchId, Model};
use tilepath::numerics::Tensor;

fn tilepath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilepath"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tilepath_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilepath"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn echo(dir: &Path) -> Value {
    json(&dir.join("config_echo.json"))
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn ppm_count(dir: &Path) -> usize {
    tree(dir)
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
        .count()
}

fn uniform_patch(value: f64) -> Image {
    Image::filled(50, 50, 3, value).unwrap()
}

/// Two-class corpus of flat patches: `bright` at 0.8..1.0, `dark` at 0.0..0.2.
fn flat_corpus(root: &Path, per_class: usize) {
    for (class, base) in [("c0_bright", 0.8), ("c1_dark", 0.0)] {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let v = base + 0.2 * i as f64 / per_class as f64;
            uniform_patch(v)
                .quantized()
                .write_pnm(dir.join(format!("{class}_{i:03}.ppm")))
                .unwrap();
        }
    }
}

/// tiny_cnn whose class-0 logit follows the mean red level of the patch
/// and whose class-1 logit is a constant 4.
fn brightness_gate() -> Model {
    let mut m = build_architecture(ArchId::TinyCnn).unwrap();
    let params: Vec<(String, Vec<usize>)> = m
        .parameters()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    for (k, (name, shape)) in params.iter().enumerate() {
        let mut d = vec![0.0; shape.iter().product()];
        if name.ends_with("/kernel") && shape.len() == 4 {
            // centre tap, input channel 0 -> output channel 0
            d[4 * shape[2] * shape[3]] = 1.0;
        } else if name == "dense1/kernel" {
            for i in (0..shape[0]).step_by(64) {
                d[i * shape[1]] = 0.05;
            }
        } else if name == "dense2/kernel" {
            d[0] = 1.0;
        } else if name == "dense2/bias" {
            d[1] = 4.0;
        }
        m.set_parameter(k, Tensor::new(shape.clone(), d).unwrap())
            .unwrap();
    }
    m
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn gate(&self) -> PathBuf {
        let p = self.path("gate.tpwf");
        if !p.exists() {
            save_weights(&brightness_gate(), &p).unwrap();
        }
        p
    }
}

#[test]
fn synth_writes_full_corpus_and_is_deterministic() {
    let f = Fixture::new();
    let (a, b) = (f.path("a"), f.path("b"));
    let args = |out: &Path| {
        vec![
            "synth".to_string(),
            "--classes".into(),
            "7".into(),
            "--per-class".into(),
            "200".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            s(out).to_string(),
        ]
    };
    for out in [&a, &b] {
        let argv = args(out);
        ok(&tilepath(
            &argv.iter().map(String::as_str).collect::<Vec<_>>(),
        ));
    }
    assert_eq!(ppm_count(&a), 1400);
    let (mut ta, mut tb) = (tree(&a), tree(&b));
    // the echo records the output path, which differs
    let echo_a = echo(&a);
    let mut echo_b = echo(&b);
    echo_b["args"]["out"] = echo_a["args"]["out"].clone();
    assert_eq!(echo_a, echo_b);
    ta.remove(Path::new("config_echo.json"));
    tb.remove(Path::new("config_echo.json"));
    assert_eq!(ta, tb);
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["classes"].as_array().unwrap().len(), 7);
    assert_eq!(manifest["train"].as_array().unwrap().len(), 980);
}

#[test]
fn missing_out_is_a_usage_error() {
    let out = tilepath(&["synth", "--classes", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(
        tilepath(&["synth", "--classes", "3", "--out", "/tmp/never-used-x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(tilepath(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_defaults_and_lr_zero_and_reproducibility() {
    let f = Fixture::new();
    let data = f.path("data");
    flat_corpus(&data, 4);

    let init = f.path("init");
    ok(&tilepath(&[
        "init",
        "--arch",
        "tiny_cnn",
        "--seed",
        "9",
        "--out",
        s(&init),
    ]));

    let frozen = f.path("frozen");
    ok(&tilepath(&[
        "train",
        "--arch",
        "tiny_cnn",
        "--data",
        s(&data),
        "--lr",
        "0",
        "--epochs",
        "2",
        "--seed",
        "9",
        "--out",
        s(&frozen),
    ]));
    assert_eq!(
        fs::read(init.join("weights.tpwf")).unwrap(),
        fs::read(frozen.join("weights.tpwf")).unwrap()
    );
    let log = fs::read_to_string(frozen.join("train_log.csv")).unwrap();
    let losses: Vec<&str> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(losses.len(), 2);
    assert_eq!(losses[0], losses[1]);

    let mut runs = Vec::new();
    for name in ["r1", "r2"] {
        let out = f.path(name);
        ok(&tilepath(&[
            "train",
            "--arch",
            "tiny_cnn",
            "--data",
            s(&data),
            "--epochs",
            "2",
            "--seed",
            "3",
            "--out",
            s(&out),
        ]));
        runs.push(fs::read(out.join("weights.tpwf")).unwrap());
        assert!(out.join("manifest.json").is_file());
    }
    assert_eq!(runs[0], runs[1]);

    let defaults = f.path("defaults");
    ok(&tilepath(&[
        "train",
        "--arch",
        "tiny_cnn",
        "--data",
        s(&data),
        "--out",
        s(&defaults),
    ]));
    let e = echo(&defaults);
    assert_eq!(e["command"], "train");
    assert_eq!(e["args"]["epochs"], 20);
    assert_eq!(e["args"]["lr"], 0.01);
    assert_eq!(e["args"]["batch"], 32);
    assert_eq!(
        fs::read_to_string(defaults.join("train_log.csv"))
            .unwrap()
            .lines()
            .count(),
        21
    );
}

#[test]
fn train_rejects_bad_inputs() {
    let f = Fixture::new();
    let data = f.path("data");
    flat_corpus(&data, 2);
    let out = f.path("o");
    let head = tilepath(&[
        "train",
        "--arch",
        "classifier_head_2",
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(head.status.code(), Some(2));
    assert!(out.join("config_echo.json").is_file());
    let seven = tilepath(&[
        "train",
        "--arch",
        "tiny_cnn",
        "--data",
        s(&f.path("missing")),
        "--out",
        s(&out),
    ]);
    assert_eq!(seven.status.code(), Some(3));
    let momentum = tilepath(&[
        "train",
        "--arch",
        "tiny_cnn",
        "--data",
        s(&data),
        "--momentum",
        "1.5",
        "--optimizer",
        "sgd-momentum",
        "--out",
        s(&out),
    ]);
    assert_eq!(momentum.status.code(), Some(2));
}

#[test]
fn eval_binary_report_has_both_orientations() {
    let f = Fixture::new();
    let data = f.path("data");
    flat_corpus(&data, 10);
    let out = f.path("eval");
    ok(&tilepath(&[
        "eval",
        "--model",
        s(&f.gate()),
        "--data",
        s(&data),
        "--subset",
        "all",
        "--out",
        s(&out),
    ]));
    let report = json(&out.join("report.json"));
    let rows = report["orientations"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row["positive_class"], k);
        for key in ["auc", "youden_j", "best_threshold", "acc", "sen", "spe"] {
            assert!(row[key].is_number(), "{key} missing");
        }
        assert_eq!(row["auc"], 1.0);
    }
    assert_eq!(report["accuracy"], 1.0);
    let roc = fs::read_to_string(out.join("roc.csv")).unwrap();
    assert!(roc.lines().count() >= 3);
    let cm = fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert_eq!(cm.lines().count(), 3);
    assert!(out.join("confusion_norm.csv").is_file());
    assert!(out.join("config_echo.json").is_file());
}

#[test]
fn eval_seven_class_confusion_and_scores_mode() {
    let f = Fixture::new();
    let data = f.path("data");
    ok(&tilepath(&[
        "synth",
        "--classes",
        "7",
        "--per-class",
        "2",
        "--seed",
        "1",
        "--out",
        s(&data),
    ]));
    let (vgg, head) = (f.path("vgg"), f.path("head"));
    ok(&tilepath(&[
        "init",
        "--arch",
        "vgg16_headless",
        "--seed",
        "5",
        "--out",
        s(&vgg),
    ]));
    ok(&tilepath(&[
        "init",
        "--arch",
        "classifier_head_7",
        "--seed",
        "2",
        "--out",
        s(&head),
    ]));
    let out = f.path("eval");
    let vgg_w = vgg.join("weights.tpwf");
    let head_w = head.join("weights.tpwf");
    ok(&tilepath(&[
        "eval",
        "--model",
        s(&head_w),
        "--extractor",
        s(&vgg_w),
        "--data",
        s(&data),
        "--subset",
        "all",
        "--out",
        s(&out),
    ]));
    let cm = fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert_eq!(cm.lines().count(), 8);
    assert!(cm.lines().all(|l| l.split(',').count() == 8));
    let norm = fs::read_to_string(out.join("confusion_norm.csv")).unwrap();
    assert_eq!(norm.lines().count(), 8);
    assert!(json(&out.join("report.json"))["orientations"]
        .as_array()
        .unwrap()
        .is_empty());

    let missing = tilepath(&[
        "eval",
        "--model",
        s(&head_w),
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let scores = f.path("scores.csv");
    fs::write(&scores, "score,label\n0.9,1\n0.8,1\n0.3,0\n0.1,0\n").unwrap();
    let sout = f.path("scores_out");
    ok(&tilepath(&[
        "eval",
        "--scores",
        s(&scores),
        "--out",
        s(&sout),
    ]));
    let r = json(&sout.join("report.json"));
    assert_eq!(r["orientations"][0]["auc"], 1.0);
    assert_eq!(r["orientations"][0]["youden_j"], 1.0);
}

#[test]
fn detect_outputs_and_errors() {
    let f = Fixture::new();
    let img = f.path("img.ppm");
    let mut canvas = Image::filled(100, 150, 3, 0.9).unwrap();
    canvas.paste(&uniform_patch(0.05), 50, 50).unwrap();
    canvas.write_pnm(&img).unwrap();
    let gate = f.gate();

    let out = f.path("detect");
    ok(&tilepath(&[
        "detect",
        "--image",
        s(&img),
        "--head2",
        s(&gate),
        "--threshold",
        "0.9",
        "--out",
        s(&out),
    ]));
    let tiles = fs::read_to_string(out.join("tiles.csv")).unwrap();
    assert_eq!(tiles.lines().count() - 1, 6);
    let skin: Vec<&str> = tiles
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(skin, ["1", "1", "1", "1", "0", "1"]);
    let mask = Image::read_pnm(out.join("mask.ppm")).unwrap();
    assert_eq!((mask.height(), mask.width()), (100, 150));
    assert!(out.join("report.json").is_file() && out.join("config_echo.json").is_file());

    let black = f.path("black");
    ok(&tilepath(&[
        "detect",
        "--image",
        s(&img),
        "--head2",
        s(&gate),
        "--threshold",
        "1.0",
        "--out",
        s(&black),
    ]));
    let mask = Image::read_pnm(black.join("mask.ppm")).unwrap();
    assert!(mask.data().iter().all(|&v| v == 0.0));

    let missing = tilepath(&[
        "detect",
        "--image",
        s(&f.path("nope.ppm")),
        "--head2",
        s(&gate),
        "--out",
        s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    let garbage = f.path("garbage.ppm");
    fs::write(&garbage, b"not an image").unwrap();
    let bad = tilepath(&[
        "detect",
        "--image",
        s(&garbage),
        "--head2",
        s(&gate),
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(3));
    let zero = tilepath(&[
        "detect",
        "--image",
        s(&img),
        "--head2",
        s(&gate),
        "--threshold",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(zero.status.code(), Some(2));
}

#[test]
fn diagnose_report_histogram_and_empty_case() {
    let f = Fixture::new();
    let gate = f.gate();
    let (vgg, head) = (f.path("vgg"), f.path("head"));
    ok(&tilepath(&[
        "init",
        "--arch",
        "vgg16_headless",
        "--seed",
        "5",
        "--out",
        s(&vgg),
    ]));
    ok(&tilepath(&[
        "init",
        "--arch",
        "classifier_head_7",
        "--seed",
        "2",
        "--out",
        s(&head),
    ]));
    let (vgg_w, head_w) = (vgg.join("weights.tpwf"), head.join("weights.tpwf"));

    let bright = f.path("bright.ppm");
    Image::filled(100, 100, 3, 0.9)
        .unwrap()
        .write_pnm(&bright)
        .unwrap();
    let out = f.path("diag");
    let run = tilepath(&[
        "diagnose",
        "--image",
        s(&bright),
        "--head2",
        s(&gate),
        "--head7",
        s(&head_w),
        "--extractor",
        s(&vgg_w),
        "--threshold",
        "0.9",
        "--out",
        s(&out),
    ]);
    ok(&run);
    let row = String::from_utf8_lossy(&run.stdout).trim().to_string();
    assert!(
        row.starts_with('[') && row.ends_with(']') && row.split(", ").count() == 7,
        "{row}"
    );
    let report = json(&out.join("report.json"));
    assert_eq!(report["empty"], false);
    assert_eq!(report["total_tile_count"], 4);
    let sum: f64 = report["proportions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-9);
    let hist = fs::read_to_string(out.join("histogram.csv")).unwrap();
    let classes: Vec<&str> = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(classes, ["c0", "c1", "c2", "c3", "c4", "c5", "c6"]);
    assert!(out.join("mask.ppm").is_file());

    let dark = f.path("dark.ppm");
    Image::filled(50, 100, 3, 0.0)
        .unwrap()
        .write_pnm(&dark)
        .unwrap();
    let empty = f.path("empty");
    ok(&tilepath(&[
        "diagnose",
        "--image",
        s(&dark),
        "--head2",
        s(&gate),
        "--head7",
        s(&head_w),
        "--extractor",
        s(&vgg_w),
        "--threshold",
        "0.9",
        "--out",
        s(&empty),
    ]));
    let report = json(&empty.join("report.json"));
    assert_eq!(report["empty"], true);
    assert_eq!(report["skin_tile_count"], 0);

    let no_extractor = tilepath(&[
        "diagnose",
        "--image",
        s(&dark),
        "--head2",
        s(&gate),
        "--head7",
        s(&head_w),
        "--out",
        s(&empty),
    ]);
    assert_eq!(no_extractor.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_corruption_fails() {
    let f = Fixture::new();
    let out = f.path("gc");
    let run = tilepath(&[
        "gradcheck",
        "--arch",
        "classifier_head_7",
        "--seed",
        "4",
        "--out",
        s(&out),
    ]);
    ok(&run);
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.contains("PASS") && !text.contains("FAIL"));
    assert!(out.join("report.json").is_file());

    let bad = tilepath(&[
        "gradcheck",
        "--arch",
        "classifier_head_2",
        "--corrupt",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn augment_count_identity_and_replay() {
    let f = Fixture::new();
    let src = f.path("src.ppm");
    let mut rng = tilepath::numerics::Rng::new(2);
    Image::new(50, 50, 3, (0..7500).map(|_| rng.next_f64()).collect())
        .unwrap()
        .quantized()
        .write_pnm(&src)
        .unwrap();

    let out = f.path("aug");
    ok(&tilepath(&[
        "augment",
        "--in",
        s(&src),
        "--count",
        "5",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]));
    assert_eq!(ppm_count(&out), 5);
    let log = json(&out.join("transforms.json"));
    let entries = log["transforms"].as_array().unwrap();
    assert_eq!(entries.len(), 5);
    let input = Image::read_pnm(&src).unwrap();
    for e in entries {
        let m: AffineMatrix = serde_json::from_value(e["matrix"].clone()).unwrap();
        let replay = apply_logged(
            &input,
            &m,
            e["flip"].as_bool().unwrap(),
            Interpolation::Nearest,
            0.0,
        )
        .unwrap();
        assert_eq!(
            replay.to_pnm_bytes(),
            fs::read(out.join(e["file"].as_str().unwrap())).unwrap()
        );
    }

    let same = f.path("same");
    ok(&tilepath(&[
        "augment",
        "--in",
        s(&src),
        "--count",
        "3",
        "--rotation",
        "0",
        "--shift-rows",
        "0",
        "--shift-cols",
        "0",
        "--shear",
        "0",
        "--zoom",
        "0",
        "--flip",
        "false",
        "--out",
        s(&same),
    ]));
    let original = fs::read(&src).unwrap();
    for i in 0..3 {
        assert_eq!(
            fs::read(same.join(format!("aug_{i:05}.ppm"))).unwrap(),
            original
        );
    }
    let bad = tilepath(&[
        "augment",
        "--in",
        s(&src),
        "--zoom",
        "1.5",
        "--out",
        s(&same),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn thread_cap_is_echoed() {
    let f = Fixture::new();
    let out = f.path("init");
    ok(&tilepath_env(
        &[
            "init",
            "--arch",
            "classifier_head_2",
            "--seed",
            "1",
            "--out",
            s(&out),
        ],
        "TILEPATH_THREADS",
        "1",
    ));
    assert_eq!(echo(&out)["threads"], 1);
}
