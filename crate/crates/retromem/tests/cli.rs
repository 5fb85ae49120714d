mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use retromem::cli::{run, Cli};
use retromem::manifest::{Manifest, SplitTag};
use retromem::netpbm::Netpbm;

fn cli(config: &Path, args: &[&str]) -> retromem::Result<String> {
    let mut argv = vec!["retromem".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".to_string(), config.display().to_string()]);
    run(Cli::try_parse_from(argv).unwrap())
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_retromem"));
    c.env("RETROMEM_THREADS", "2");
    c
}

struct Run {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn full_run(extra: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_config(dir.path(), extra);
    let out = dir.path().join("run");
    for cmd in ["gen-data", "train-stage1", "build-memory", "train-stage2"] {
        cli(&config, &[cmd]).unwrap_or_else(|e| panic!("{cmd}: {e}"));
    }
    Run {
        _dir: dir,
        config,
        out,
    }
}

fn log_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn pipeline_end_to_end() {
    let r = full_run("");
    let manifest = Manifest::read(&r.out.join("data/manifest.tsv")).unwrap();
    assert_eq!(manifest.count(SplitTag::Train), 4);
    assert_eq!(manifest.evaluation_rows().len(), 3);

    let log = log_lines(&r.out.join("logs/train-stage1.jsonl"));
    let seqs: Vec<u64> = log.iter().map(|v| v["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
    let steps: Vec<u64> = log
        .iter()
        .filter(|v| v["kind"] == "step")
        .map(|v| v["step"].as_u64().unwrap())
        .collect();
    assert_eq!(steps, [0, 1, 2, 3]);
    assert_eq!(log.iter().filter(|v| v["kind"] == "epoch").count(), 2);
    assert!(log[1]["total"].as_u64().unwrap() > log[1]["backbone"].as_u64().unwrap());

    let log2 = log_lines(&r.out.join("logs/train-stage2.jsonl"));
    assert_eq!(log2.iter().filter(|v| v["kind"] == "memory").count(), 2);
    for v in log2.iter().filter(|v| v["kind"] == "step") {
        let l = &v["loss"];
        let seg: f64 = l["l_seg"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum();
        let total = l["total"].as_f64().unwrap();
        assert!((seg + l["l_c"].as_f64().unwrap() - total).abs() < 1e-5);
    }

    let image = r.out.join("data/images/test-0000.ppm");
    let pred = r.out.join("single.pgm");
    let text = cli(
        &r.config,
        &["infer", image.to_str().unwrap(), pred.to_str().unwrap()],
    )
    .unwrap();
    assert!(text.contains("k* = "), "{text}");
    let s: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("s = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((-1.0..=1.0).contains(&s));
    let out = Netpbm::read(&pred).unwrap();
    assert_eq!((out.channels, out.width, out.height), (1, 32, 32));
    let first = std::fs::read(&pred).unwrap();
    cli(
        &r.config,
        &["infer", image.to_str().unwrap(), pred.to_str().unwrap()],
    )
    .unwrap();
    assert_eq!(std::fs::read(&pred).unwrap(), first);

    cli(&r.config, &["infer"]).unwrap();
    assert_eq!(
        std::fs::read(r.out.join("predictions/test-0000.pgm")).unwrap(),
        first
    );
    let table = cli(&r.config, &["eval"]).unwrap();
    assert!(table.contains("overall"), "{table}");
    let report = std::fs::read_to_string(r.out.join("report.txt")).unwrap();
    assert!(report.contains("rows = 3"), "{report}");
}

#[test]
fn infer_resizes_back_to_the_input_size() {
    let r = full_run("");
    let dir = r.out.join("odd");
    let img = Netpbm {
        channels: 3,
        width: 24,
        height: 40,
        pixels: (0..24 * 40 * 3).map(|i| (i % 251) as u8).collect(),
    };
    img.write(&dir.join("in.ppm")).unwrap();
    let out = bin()
        .args(["infer", "--config"])
        .arg(&r.config)
        .arg(dir.join("in.ppm"))
        .arg(dir.join("out.pgm"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let p = Netpbm::read(&dir.join("out.pgm")).unwrap();
    assert_eq!((p.width, p.height), (24, 40));
}

#[test]
fn identical_seeds_give_identical_artifacts() {
    let a = full_run("");
    let b = full_run("");
    for f in [
        "stage1.rmck",
        "memory.rmem",
        "stage2.rmck",
        "memory-recall.rmem",
        "data/manifest.tsv",
        "data/images/train-0002.ppm",
    ] {
        assert_eq!(
            std::fs::read(a.out.join(f)).unwrap(),
            std::fs::read(b.out.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    let config = common::write_config(c.path(), "");
    cli(&config, &["gen-data", "--seed", "7"]).unwrap();
    cli(&config, &["train-stage1", "--seed", "7"]).unwrap();
    assert_ne!(
        std::fs::read(a.out.join("stage1.rmck")).unwrap(),
        std::fs::read(c.path().join("run/stage1.rmck")).unwrap()
    );
}

#[test]
fn hdbscan_ignores_the_configured_k() {
    let r = full_run("");
    let bank = r.out.join("memory.rmem");
    let first = std::fs::read(&bank).unwrap();
    cli(&r.config, &["build-memory", "--set", "clustering.k=1"]).unwrap();
    assert_eq!(std::fs::read(&bank).unwrap(), first);
    let text = cli(
        &r.config,
        &[
            "build-memory",
            "--backend",
            "kmeans",
            "--set",
            "clustering.k=1",
        ],
    )
    .unwrap();
    assert!(text.contains("K = 1"), "{text}");
    assert!(text.contains("N = 4"), "{text}");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train-stage1", "--config", "/nonexistent.conf"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent.conf"));

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "[train]\nepochs = 0\n[data]\ninput_size = 50\n").unwrap();
    let out = bin()
        .args(["train-stage1", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("epochs") && err.contains("input_size"),
        "{err}"
    );

    let config = common::write_config(dir.path(), "");
    let out = bin()
        .args(["train-stage2", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!dir.path().join("run/stage2.rmck").exists());

    let out = bin()
        .args(["build-memory", "--backend", "spectral"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_names_missing_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_config(dir.path(), "");
    cli(&config, &["gen-data"]).unwrap();
    let e = cli(&config, &["eval"]).unwrap_err().to_string();
    assert!(e.contains("test-0000") && e.contains("test-0002"), "{e}");
}

#[test]
fn withheld_patterns_become_unseen() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write_config(dir.path(), "");
    cli(
        &config,
        &[
            "gen-data",
            "--set",
            "synth.test_count=12",
            "--set",
            "synth.exclude_train=large_object, background_match",
        ],
    )
    .unwrap();
    let m = Manifest::read(&dir.path().join("run/data/manifest.tsv")).unwrap();
    for r in m.train_rows() {
        assert!(!matches!(
            r.pattern.name(),
            "large_object" | "background_match"
        ));
    }
    for r in m.evaluation_rows() {
        if matches!(r.pattern.name(), "large_object" | "background_match") {
            assert_eq!(r.split, SplitTag::Unseen);
        }
    }
}
