use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use mmcse::data::load_dataset;
use mmcse::train::read_log;
use mmcse::MetricReport;
use tempfile::TempDir;

fn mmcse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmcse")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mmcse(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
    }
    out
}

/// 8 noiseless videos and a checkpoint overfit on them (loss row 1).
struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    run: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let run = dir.path().join("run");
        ok(&[
            "gen-data", "--out", s(&data), "--videos", "8", "--segments", "5", "--classes", "4", "--dims", "16,16",
            "--noise", "0", "--seed", "1",
        ]);
        ok(&[
            "train", "--data", s(&data), "--out", s(&run), "--epochs", "300", "--batch-size", "8", "--lr", "1e-3",
            "--d1", "32", "--d2", "16", "--layers", "2", "--losses", "basic",
        ]);
        Fixture { _dir: dir, data, run }
    })
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["gen-data", "--out", s(&a), "--seed", "7"]);
    ok(&["gen-data", "--out", s(&b), "--seed", "7"]);
    ok(&["gen-data", "--out", s(&c), "--seed", "8"]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
    assert_eq!(load_dataset(&a).unwrap().len(), 64);
}

#[test]
fn gen_data_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&mmcse(&["gen-data", "--out", s(&out), "--classes", "1", "--cooc", "0:1:1.0"])), 1);
    assert_eq!(code(&mmcse(&["gen-data", "--out", s(&out), "--cooc", "0:9:1.0"])), 1);
    assert_eq!(code(&mmcse(&["gen-data", "--out", s(&out), "--cooc", "0-1"])), 1);
    assert_eq!(code(&mmcse(&["gen-data", "--out", s(&out), "--unknown-flag"])), 1);
    assert_eq!(code(&mmcse(&["gen-data"])), 1);
    assert_eq!(code(&mmcse(&[])), 1);
    assert!(!out.exists());
}

#[test]
fn noiseless_dataset_loads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["gen-data", "--out", s(&out), "--videos", "8", "--noise", "0"]);
    let d = load_dataset(&out).unwrap();
    d.validate().unwrap();
    assert_eq!(d.len(), 8);
    assert!(out.join("config.toml").is_file());
}

#[test]
fn help_documents_flags_and_defaults() {
    let help = ok(&["train", "--help"]);
    for flag in [
        "--data", "--out", "--config", "--epochs", "--batch-size", "--lr", "--weight-decay", "--layers", "--d1", "--d2",
        "--seed", "--ablate", "--losses", "--lambda1", "--lambda2", "--ort", "--mmil", "--lgsf-residual",
    ] {
        assert!(help.contains(flag), "train --help lacks {flag}");
    }
    assert!(help.contains("[default: 60]") && help.contains("[default: 256]"));
    let help = ok(&["grad-check", "--help"]);
    for flag in ["--seed", "--t", "--k", "--d1", "--d2", "--layers", "[default: 3]"] {
        assert!(help.contains(flag), "grad-check --help lacks {flag}");
    }
    ok(&["--version"]);
}

#[test]
fn train_rejects_empty_fgse() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = mmcse(&[
        "train", "--data", s(&f.data), "--out", s(dir.path()), "--ablate", "no-intra", "--ablate", "no-cross",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty FGSE"));
    assert_eq!(code(&mmcse(&["train", "--data", s(&f.data), "--out", s(dir.path()), "--ablate", "no-everything"])), 1);
    assert_eq!(code(&mmcse(&["train", "--data", s(&f.data), "--out", s(dir.path()), "--losses", "basic,foo"])), 1);
    let missing = dir.path().join("missing");
    assert_eq!(code(&mmcse(&["train", "--data", s(&missing), "--out", s(dir.path())])), 2);
}

#[test]
fn basic_only_zeroes_other_columns() {
    let f = fixture();
    let log = read_log(f.run.join("log.jsonl")).unwrap();
    assert_eq!(log.len(), 300);
    for r in &log {
        assert_eq!((r.rec, r.ort, r.ec), (0.0, 0.0, 0.0));
        assert_eq!(r.total, r.basic);
    }
}

#[test]
fn config_file_precedence() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, "epochs = 3\nbatch_size = 4\nd1 = 8\nd2 = 6\nlayers = 1\nseed = 5\n").unwrap();
    let out = dir.path().join("run");
    ok(&["train", "--data", s(&f.data), "--out", s(&out), "--config", s(&cfg), "--epochs", "1"]);
    let log = read_log(out.join("log.jsonl")).unwrap();
    // One epoch of two batches: the flag beat the file, the file's batch size beat the default.
    assert_eq!(log.len(), 2);
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("epochs = 1") && echo.contains("seed = 5") && echo.contains("lambda1 = 0.1"));

    std::fs::write(&cfg, "epochs = 1\nnot_a_key = 2\n").unwrap();
    assert_eq!(code(&mmcse(&["train", "--data", s(&f.data), "--out", s(&out), "--config", s(&cfg)])), 1);
    let missing = dir.path().join("none.toml");
    assert_eq!(code(&mmcse(&["train", "--data", s(&f.data), "--out", s(&out), "--config", s(&missing)])), 2);
}

#[test]
fn overfit_checkpoint_scores_perfectly() {
    let f = fixture();
    let text = ok(&["eval", "--ckpt", s(&f.run), "--data", s(&f.data)]);
    assert!(text.starts_with("# threshold=0.5"));
    let report = MetricReport::parse_text(&text).unwrap();
    assert_eq!(report.ten(), [1.0; 10]);
    assert_eq!(report.avg, 1.0);
}

#[test]
fn machine_report_matches_text_report() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("report.json");
    // A high threshold so the numbers are not all 1.
    let text = ok(&["eval", "--ckpt", s(&f.run), "--data", s(&f.data), "--threshold", "0.999999"]);
    let json = ok(&[
        "eval", "--ckpt", s(&f.run), "--data", s(&f.data), "--threshold", "0.999999", "--report", "machine", "--out",
        s(&file),
    ]);
    assert_eq!(std::fs::read_to_string(&file).unwrap(), json);
    assert!(dir.path().join("report.config.toml").is_file());
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    let from_json: MetricReport = serde_json::from_value(parsed["metrics"].clone()).unwrap();
    assert_eq!(from_json, MetricReport::parse_text(&text).unwrap());
    assert_eq!(parsed["protocol"]["threshold"], 0.999999);
}

#[test]
fn eval_rejects_mismatched_classes() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("k6");
    ok(&["gen-data", "--out", s(&other), "--videos", "2", "--segments", "5", "--classes", "6", "--dims", "16,16"]);
    let out = mmcse(&["eval", "--ckpt", s(&f.run), "--data", s(&other)]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&mmcse(&["eval", "--ckpt", s(dir.path()), "--data", s(&f.data)])), 2);
    assert_eq!(code(&mmcse(&["eval", "--ckpt", s(&f.run), "--data", s(&f.data), "--threshold", "1.5"])), 1);
    assert_eq!(code(&mmcse(&["eval", "--ckpt", s(&f.run), "--data", s(&f.data), "--report", "xml"])), 1);
}

fn reported_error(stdout: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with("max relative error:")).unwrap();
    line.split(':').nth(1).unwrap().trim().parse().unwrap()
}

#[test]
fn grad_check_command() {
    let a = ok(&["grad-check", "--seed", "3"]);
    let b = ok(&["grad-check", "--seed", "3"]);
    assert_eq!(a, b);
    assert!(reported_error(&a) <= 1e-6);
    let l0 = ok(&["grad-check", "--layers", "0"]);
    assert!(reported_error(&l0) <= 1e-6);
    // A coarse step fails the tolerance: numeric failure.
    let out = mmcse(&["grad-check", "--step", "0.05"]);
    assert_eq!(code(&out), 3);
    assert!(reported_error(&stdout(&out)) > 1e-6);
    assert_eq!(code(&mmcse(&["grad-check", "--ablate", "no-cafd", "--ablate", "no-bg"])), 1);
}

#[test]
fn exports() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cooc = dir.path().join("cooc.json");
    ok(&["export-cooc", "--ckpt", s(&f.run), "--data", s(&f.data), "--out", s(&cooc)]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cooc).unwrap()).unwrap();
    let m = v["matrix"].as_array().unwrap();
    assert_eq!(m.len(), 4);
    for row in m {
        let sum: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-6);
    }
    assert!(dir.path().join("cooc.config.toml").is_file());

    let emb = dir.path().join("emb.csv");
    ok(&["export-embeddings", "--ckpt", s(&f.run), "--data", s(&f.data), "--out", s(&emb)]);
    let text = std::fs::read_to_string(&emb).unwrap();
    // 2 modalities x 8 videos x T=5 x (K+1)=5, plus a header.
    assert_eq!(text.lines().count(), 2 * 8 * 5 * 5 + 1);
    assert!(text.lines().next().unwrap().starts_with("video,modality,segment,slot,kind,f0"));
    assert_eq!(text.lines().filter(|l| l.contains(",background,")).count(), 2 * 8 * 5);
}

#[test]
fn full_defaults_on_eight_videos() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d8");
    let run = dir.path().join("run");
    ok(&["gen-data", "--out", s(&data), "--videos", "8"]);
    let out = ok(&["train", "--data", s(&data), "--out", s(&run)]);
    assert!(out.contains("epoch 60 step 60"));
    let epochs = std::fs::read_dir(&run)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("epoch-"))
        .count();
    assert_eq!(epochs, 60);
    assert!(run.join("epoch-0060").join("manifest.json").is_file());
    assert_eq!(read_log(run.join("log.jsonl")).unwrap().len(), 60);
}
