//! Commands run in-process through the same entry point as the binary, so
//! exit statuses here are exactly what a shell would see.

use std::path::Path;

use wgpt_core::formats::{load_mel, load_tokens, save_tokens};
use wgpt_core::model::checkpoint::load_checkpoint;
use wgpt_core::tokenizer::{TokenSequence, TokenSource};

use super::run_args;
use crate::pipeline::{featurize, FeaturizeOptions};

fn status(args: &[&str]) -> u8 {
    run_args(std::iter::once("wgpt").chain(args.iter().copied()))
}

fn ok(args: &[&str]) {
    assert_eq!(status(args), 0, "{args:?}");
}

fn p(dir: &Path, rel: &str) -> String {
    dir.join(rel).display().to_string()
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(status(&["frobnicate"]), 1);
    assert_eq!(status(&["train"]), 1);
    assert_eq!(status(&["--help"]), 0);
    assert_eq!(status(&["--version"]), 0);
    assert_eq!(status(&["params", "--variant", "GPT_M"]), 1);
    assert_eq!(status(&["synth", "--out", "x", "--profile", "speech"]), 1);
}

#[test]
fn invalid_configs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"model":{"variant":"GPT_S","vocab":1024,"context":750,"main_layers":8,"main_dim":64,
        "main_heads":7,"ff_mult":4,"head_hidden":2048},"data":{"manifest":"m.tsv","out_dir":"run"}}"#;
    std::fs::write(d.join("bad.json"), cfg).unwrap();
    assert_eq!(status(&["train", "--config", &p(d, "bad.json")]), 1);
    let typo = cfg.replace("\"main_heads\":7", "\"main_heads\":8,\"heads\":2");
    std::fs::write(d.join("typo.json"), typo).unwrap();
    assert_eq!(status(&["params", "--config", &p(d, "typo.json")]), 1);
    std::fs::write(d.join("trunc.json"), &cfg[..40]).unwrap();
    assert_eq!(status(&["train", "--config", &p(d, "trunc.json")]), 1);
}

#[test]
fn missing_files_fail_at_runtime_and_malformed_ones_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        status(&["eval", "--checkpoint", &p(d, "nope.wgp1"), "--manifest", &p(d, "m.tsv")]),
        2
    );
    std::fs::write(d.join("bad.wgp1"), b"WGP1 but not really").unwrap();
    assert_eq!(
        status(&["eval", "--checkpoint", &p(d, "bad.wgp1"), "--manifest", &p(d, "m.tsv")]),
        1
    );
}

#[test]
fn params_accepts_presets_run_configs_and_model_configs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["params"]);
    ok(&["params", "--variant", "hybrid"]);
    ok(&[
        "synth",
        "--out",
        &p(d, "adv"),
        "--profile",
        "hybrid-advantage",
        "--n",
        "4",
    ]);
    ok(&["params", "--config", &p(d, "adv/run.json")]);
    let model = r#"{"variant":"GPT_S","vocab":3,"context":4,"main_layers":1,"main_dim":2,"main_heads":1,"ff_mult":4,"head_hidden":2}"#;
    std::fs::write(d.join("toy.json"), model).unwrap();
    ok(&["params", "--config", &p(d, "toy.json")]);
}

#[test]
fn featurize_empty_directory_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("empty")).unwrap();
    ok(&["featurize", "--in", &p(d, "empty"), "--out", &p(d, "mel")]);
    assert!(d.join("mel").is_dir());
}

#[test]
fn featurize_is_idempotent_and_isolates_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", &p(d, "wav"), "--profile", "smoke-wav"]);
    std::fs::write(d.join("wav/broken.wav"), b"RIFF nonsense").unwrap();
    assert_eq!(status(&["featurize", "--in", &p(d, "wav"), "--out", &p(d, "mel")]), 2);
    assert!(!d.join("mel/broken.wgm1").exists());
    for i in 0..6 {
        let mel = load_mel(d.join(format!("mel/smoke-{i:02}.wgm1"))).unwrap();
        assert_eq!(mel.n_frames(), 750, "smoke-{i:02}");
    }
    std::fs::remove_file(d.join("wav/broken.wav")).unwrap();

    let (input, output, stats) = (d.join("wav"), d.join("mel"), d.join("stats.wgs1"));
    let raw = FeaturizeOptions {
        input: &input,
        output: &output,
        stats: None,
        fit_stats: false,
    };
    let before = std::fs::metadata(d.join("mel/smoke-00.wgm1"))
        .unwrap()
        .modified()
        .unwrap();
    let s = featurize(&raw).unwrap();
    assert_eq!((s.written, s.skipped, s.failed), (0, 6, 0));
    let after = std::fs::metadata(d.join("mel/smoke-00.wgm1"))
        .unwrap()
        .modified()
        .unwrap();
    assert_eq!(before, after);

    // New normalization statistics invalidate every output.
    let fit = FeaturizeOptions {
        stats: Some(&stats),
        fit_stats: true,
        ..raw
    };
    assert_eq!(featurize(&fit).unwrap().written, 6);
    let apply = FeaturizeOptions {
        fit_stats: false,
        ..fit
    };
    assert_eq!(featurize(&apply).unwrap().skipped, 6);
    assert_eq!(featurize(&raw).unwrap().written, 6);
}

#[test]
fn tokenize_requires_a_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("mel")).unwrap();
    let args = [
        "tokenize",
        "--in",
        &p(d, "mel"),
        "--codebook",
        &p(d, "cb.wgc1"),
        "--out",
        &p(d, "tok"),
    ];
    assert_eq!(status(&args), 1);
}

#[test]
fn fresh_checkpoint_is_near_uniform_and_samples_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", &p(d, "mem"), "--profile", "memorize", "--seed", "3"]);
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("mem/run.json")).unwrap()).unwrap();
    cfg["model"] = serde_json::json!({"variant": "GPT_S", "vocab": 1024, "context": 750, "main_layers": 8,
        "main_dim": 64, "main_heads": 8, "ff_mult": 4, "head_hidden": 2048});
    std::fs::write(d.join("mem/full.json"), cfg.to_string()).unwrap();
    ok(&["train", "--config", &p(d, "mem/full.json"), "--init-only"]);
    assert!(d.join("mem/run/run.json").exists());

    let ck = p(d, "mem/run/init.wgp1");
    ok(&[
        "eval",
        "--checkpoint",
        &ck,
        "--manifest",
        &p(d, "mem/manifest.tsv"),
        "--split",
        "all",
        "--out",
        &p(d, "m.csv"),
    ]);
    let csv = std::fs::read_to_string(d.join("m.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "GPT_S");
    let ppl: f64 = row[4].parse().unwrap();
    assert!((700.0..=1400.0).contains(&ppl), "{csv}");

    let prompt = TokenSequence::new(vec![5, 6, 7], 1024, TokenSource::External).unwrap();
    save_tokens(d.join("prompt.wgt1"), &prompt).unwrap();
    let pr = p(d, "prompt.wgt1");
    let args = [
        "sample",
        "--checkpoint",
        &ck,
        "--prompt",
        &pr,
        "--n",
        "20",
        "--top-k",
        "50",
        "--seed",
        "4",
        "--out",
    ];
    ok(&[&args[..], &[p(d, "a.wgt1").as_str()]].concat());
    ok(&[&args[..], &[p(d, "b.wgt1").as_str()]].concat());
    let a = load_tokens(d.join("a.wgt1")).unwrap();
    assert_eq!(a.len(), 23);
    assert_eq!(&a.ids()[..3], prompt.ids());
    assert_eq!(a, load_tokens(d.join("b.wgt1")).unwrap());
}

#[test]
fn hybrid_checkpoints_refuse_free_running() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth",
        "--out",
        &p(d, "adv"),
        "--profile",
        "hybrid-advantage",
        "--n",
        "10",
    ]);
    ok(&["train", "--config", &p(d, "adv/run.json"), "--init-only"]);
    let prompt = TokenSequence::new(vec![1, 2], 64, TokenSource::External).unwrap();
    save_tokens(d.join("p.wgt1"), &prompt).unwrap();
    let args = [
        "sample",
        "--checkpoint",
        &p(d, "adv/run/init.wgp1"),
        "--prompt",
        &p(d, "p.wgt1"),
        "--out",
        &p(d, "s.wgt1"),
    ];
    assert_eq!(status(&args), 1);
}

#[test]
fn train_resume_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth",
        "--out",
        &p(d, "adv"),
        "--profile",
        "hybrid-advantage",
        "--n",
        "20",
        "--seed",
        "1",
    ]);
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("adv/run.json")).unwrap()).unwrap();
    cfg["train"]["epochs"] = 1.into();
    std::fs::write(d.join("adv/short.json"), cfg.to_string()).unwrap();
    ok(&["train", "--config", &p(d, "adv/short.json")]);
    for f in ["last.wgp1", "best.wgp1", "train_log.csv", "run.json"] {
        assert!(d.join("adv/run").join(f).exists(), "{f}");
    }

    cfg["train"]["epochs"] = 2.into();
    std::fs::write(d.join("adv/longer.json"), cfg.to_string()).unwrap();
    ok(&[
        "train",
        "--config",
        &p(d, "adv/longer.json"),
        "--resume",
        &p(d, "adv/run/last.wgp1"),
    ]);
    let ck = load_checkpoint(d.join("adv/run/last.wgp1")).unwrap();
    assert_eq!(ck.meta["epochs_completed"], 2);

    ok(&["compare", "--config", &p(d, "adv/short.json"), "--seeds", "3"]);
    let csv = std::fs::read_to_string(d.join("adv/run/compare.csv")).unwrap();
    // Header, 2 models × 3 seeds, two summaries.
    assert_eq!(csv.lines().count(), 1 + 6 + 2, "{csv}");
    assert_eq!(csv.lines().filter(|l| l.contains(",mean,")).count(), 2);
    assert_eq!(
        status(&["compare", "--config", &p(d, "adv/short.json"), "--seeds", "2"]),
        1
    );
}
