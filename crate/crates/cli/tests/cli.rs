use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn t2t(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_t2t"))
        .args(args)
        .env_remove("T2T_SEED")
        .env("T2T_THREADS", "0")
        .output()
        .expect("spawn t2t")
}

fn ok(args: &[&str]) -> Output {
    let out = t2t(args);
    assert!(
        out.status.success(),
        "t2t {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One sample per primitive, small camera.
fn gen_tiny(out: &Path, seed: &str, camera: &str) {
    ok(&[
        "gen",
        "--out",
        s(out),
        "--camera",
        camera,
        "--grid-points",
        "1",
        "--orientations",
        "1",
        "--seed",
        seed,
    ]);
}

struct Fixture {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = root.join("prim");
        gen_tiny(&corpus, "11", "40x30");
        Fixture {
            _dir: dir,
            corpus,
            root,
        }
    })
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen_tiny(&a, "3", "40x30");
    gen_tiny(&b, "3", "40x30");
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert_eq!(ta.len(), 1 + 3 * 32);
    assert!(ta == tb, "corpora differ");
    let m = read_json(&a.join("manifest.json"));
    assert_eq!(m["counts"]["total"], 32);
    assert_eq!(m["counts"]["train"], 24);
    assert_eq!(m["counts"]["val"], 8);
}

#[test]
fn env_seed_applies_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_t2t"))
        .args([
            "gen",
            "--out",
            s(&dir.path().join("e")),
            "--camera",
            "40x30",
            "--grid-points",
            "1",
        ])
        .args(["--orientations", "1"])
        .env("T2T_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_json(&dir.path().join("e/manifest.json"))["seed"], 99);
    let out = Command::new(env!("CARGO_BIN_EXE_t2t"))
        .args([
            "gen",
            "--out",
            s(&dir.path().join("f")),
            "--camera",
            "40x30",
            "--grid-points",
            "1",
        ])
        .args(["--orientations", "1", "--seed", "5"])
        .env("T2T_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read_json(&dir.path().join("f/manifest.json"))["seed"], 5);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = t2t(&[
        "gen",
        "--config",
        s(&dir.path().join("missing.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("t2t: error[config]"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"corpus": "primitives", "unknown_key": 1}"#).unwrap();
    let out = t2t(&["gen", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let out = t2t(&["gen", "--out", s(dir.path()), "--orientations", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_and_format_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = t2t(&[
        "eval",
        "--corpus",
        s(&dir.path().join("nothing")),
        "--oracle",
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let f = fixture();
    let junk = dir.path().join("junk.t2tm");
    std::fs::write(&junk, b"T2TMxxxx").unwrap();
    let out = t2t(&[
        "eval",
        "--corpus",
        s(&f.corpus),
        "--model",
        s(&junk),
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn camera_mismatch_exits_5() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("lin.t2tm");
    ok(&[
        "train",
        "--corpus",
        s(&f.corpus),
        "--model",
        "linear",
        "--out",
        s(&model),
        "--downsample",
        "2",
    ]);
    let other = dir.path().join("other");
    gen_tiny(&other, "11", "80x60");
    let out = t2t(&[
        "eval",
        "--corpus",
        s(&other),
        "--model",
        s(&model),
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_is_deterministic_and_logs_best_val() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let model = dir.path().join(format!("{name}.t2tm"));
        ok(&[
            "train",
            "--corpus",
            s(&f.corpus),
            "--model",
            "array",
            "--out",
            s(&model),
            "--downsample",
            "2",
            "--max-epochs",
            "3",
            "--seed",
            "4",
        ]);
        bytes.push(std::fs::read(&model).unwrap());
        assert!(model.with_extension("log").exists());
        assert!(model.with_extension("run.json").exists());
    }
    assert!(bytes[0] == bytes[1], "model bytes differ between runs");

    let log = std::fs::read_to_string(dir.path().join("a.log")).unwrap();
    let vals: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 3);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let run = read_json(&dir.path().join("a.run.json"));
    assert_eq!(run["best_val_l3"].as_f64().unwrap(), min);
    assert_eq!(run["config"]["seed"], 4);
    assert_eq!(run["corpus_manifest_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn oracle_eval_is_perfect_and_reports_percent() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = ok(&["eval", "--corpus", s(&f.corpus), "--oracle", "--out", s(&report)]);
    let r = read_json(&report);
    let aggs = r["aggregate"].as_array().unwrap();
    assert_eq!(aggs.len(), 2);
    for a in aggs {
        assert_eq!(a["rmse"].as_f64().unwrap(), 0.0);
        assert_eq!(a["percent_fullscale"].as_f64().unwrap(), 0.0);
        assert_eq!(a["ssim"].as_f64().unwrap(), 1.0);
        assert_eq!(a["contact_iou"].as_f64().unwrap(), 1.0);
    }
    assert_eq!(r["per_sample"].as_array().unwrap().len(), 32);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().next().unwrap().contains("sqrt(L3)%"));
    assert_eq!(table, std::fs::read_to_string(report.with_extension("txt")).unwrap());
}

#[test]
fn percent_column_is_rmse_over_fullscale() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("lin.t2tm");
    ok(&[
        "train",
        "--corpus",
        s(&f.corpus),
        "--model",
        "linear",
        "--out",
        s(&model),
        "--downsample",
        "2",
    ]);
    let report = dir.path().join("r.json");
    ok(&[
        "eval",
        "--corpus",
        s(&f.corpus),
        "--model",
        s(&model),
        "--split",
        "val",
        "--out",
        s(&report),
    ]);
    let r = read_json(&report);
    for row in r["per_sample"].as_array().unwrap() {
        let rmse = row["rmse"].as_f64().unwrap();
        assert!((row["percent_fullscale"].as_f64().unwrap() - 100.0 * rmse / 40000.0).abs() < 1e-9);
        assert_eq!(row["split"], "val");
    }
}

fn pgm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let text = String::from_utf8_lossy(&bytes[..20]).to_string();
    let mut it = text.split_ascii_whitespace();
    assert_eq!(it.next(), Some("P5"));
    let w: usize = it.next().unwrap().parse().unwrap();
    let h: usize = it.next().unwrap().parse().unwrap();
    let body = bytes[bytes.len() - w * h..].to_vec();
    (w, h, body)
}

#[test]
fn strips_have_four_panels() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let strips = dir.path().join("strips");
    ok(&[
        "eval",
        "--corpus",
        s(&f.corpus),
        "--oracle",
        "--out",
        s(&dir.path().join("r.json")),
        "--render",
        s(&strips),
        "--render-limit",
        "2",
    ]);
    let files: Vec<_> = std::fs::read_dir(&strips).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 2);
    for p in files {
        let (w, h, _) = pgm(&p);
        assert_eq!((w, h), (4 * 396 + 3 * 4, 240));
    }
}

#[test]
fn interp_round_trip_and_render() {
    let f = fixture();
    let dir = f.root.join("interp");
    std::fs::create_dir_all(&dir).unwrap();
    let sample = std::fs::read_dir(f.corpus.join("samples"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let y = sample.join("y.txl");
    let (pfm, back) = (dir.join("y.pfm"), dir.join("y2.txl"));
    ok(&["interp", "--to", "image", "--input", s(&y), "--output", s(&pfm)]);
    ok(&["interp", "--to", "array", "--input", s(&pfm), "--output", s(&back)]);
    let a = t2t_core::formats::read_txl(&y).unwrap();
    let b = t2t_core::formats::read_txl(&back).unwrap();
    let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst <= 0.5, "round trip error {worst}");

    let zero = dir.join("zero.txl");
    t2t_core::formats::write_txl(&zero, &[0.0; 20]).unwrap();
    let out_pgm = dir.join("zero.pgm");
    let out = ok(&["render", "--input", s(&zero), "--output", s(&out_pgm)]);
    let (w, h, body) = pgm(&out_pgm);
    assert_eq!((w, h), (396, 240));
    assert!(body.iter().all(|&v| v == body[0]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scale"));

    let img_pgm = dir.join("x.pgm");
    ok(&["render", "--input", s(&sample.join("x.pfm")), "--output", s(&img_pgm)]);
    assert_eq!(pgm(&img_pgm).0, 40);
}

#[test]
fn objects_corpus_has_1260_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("obj");
    ok(&["gen", "--corpus", "objects", "--out", s(&out), "--camera", "40x30"]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["counts"]["total"], 1260);
    assert_eq!(m["counts"]["per_feature"], 63);
    assert_eq!(m["samples"].as_array().unwrap().len(), 1260);
    assert!(m["samples"].as_array().unwrap().iter().all(|e| e["split"] == "test"));
}
