//! The `modimg` binary: JSON summaries, exit codes and stage contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_modimg");

fn config(dir: &Path, extra: &str) -> PathBuf {
    let body = format!(
        r#"data_dir = "data"
out_dir = "run"

[synth]
n_stays = 30
seed = 3
cxr_size = 16
ecg_duration_s = 2.0
short_stay_rate = 0.1

[cohort]
split_seed = 8

[encode]
canvas_size = 96
ecg_duration_s = 2.0

[model]
modalities = "C|M|X|E"
text = true

[model.vision]
image_size = 32
patch_size = 16
embed_dim = 16
n_layers = 1
n_heads = 2
feature_dim = 8

[model.text_encoder]
bpe_vocab_size = 300
context_length = 64
embed_dim = 16
n_layers = 1
n_heads = 2
feature_dim = 8

[train]
epochs = 2
batch_size = 4
{extra}
"#
    );
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn modimg(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env("MODIMG_THREADS", "2").output().unwrap()
}

fn ok_json(args: &[&str], cwd: &Path) -> Value {
    let out = modimg(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn full_pipeline_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let cfg = config(cwd, "");
    let cfg = cfg.to_str().unwrap();

    let synth = ok_json(&["synth", "--config", cfg], cwd);
    assert_eq!(synth["stays"], 30);

    let cohort = ok_json(&["cohort", "--config", cfg], cwd);
    let n = cohort["instances"].as_u64().unwrap() as usize;
    assert!(n > 0 && n < 30, "short stays should be excluded");

    let render = ok_json(&["render", "--config", cfg], cwd);
    assert_eq!(render, serde_json::json!({ "rendered": n }));
    let pngs = fs::read_dir(cwd.join("run/images")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "png").count();
    assert_eq!(pngs, 4 * n);

    let train = ok_json(&["train", "--config", cfg], cwd);
    assert_ne!(train["init_hash"], train["final_hash"]);
    assert_eq!(train["history"].as_array().unwrap().len(), 2);

    let e1 = modimg(&["eval", "--config", cfg], cwd);
    let e2 = modimg(&["eval", "--config", cfg], cwd);
    assert!(e1.status.success());
    assert_eq!(e1.stdout, e2.stdout);
    let eval: Value = serde_json::from_slice(&e1.stdout).unwrap();
    assert_eq!(eval["params_sha256"], train["final_hash"]);

    let explain = ok_json(&["explain", "--config", cfg], cwd);
    let shown = explain["instances"].as_u64().unwrap();
    assert_eq!(explain["overlays"].as_u64().unwrap(), 4 * shown);
    assert_eq!(explain["text_files"].as_u64().unwrap(), shown);

    // the same predictions twice: no difference
    fs::copy(cwd.join("run/predictions_test.csv"), cwd.join("a.csv")).unwrap();
    let cmp_cfg = config(cwd, "\n[compare]\na = \"a.csv\"\nb = \"run/predictions_test.csv\"\nn_boot = 50\nseed = 1\n");
    let cmp = ok_json(&["compare", "--config", cmp_cfg.to_str().unwrap()], cwd);
    assert_eq!(cmp["delong"]["p"], 1.0);
    assert_eq!(cmp["bootstrap"]["t_test"]["p"], 1.0);
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let cfg = config(cwd, "learning_rate = 0.0");
    let cfg = cfg.to_str().unwrap();
    for stage in ["synth", "cohort", "render"] {
        ok_json(&[stage, "--config", cfg], cwd);
    }
    let train = ok_json(&["train", "--config", cfg], cwd);
    assert_eq!(train["init_hash"], train["final_hash"]);
}

#[test]
fn out_flag_overrides_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let cfg = config(cwd, "");
    let cfg = cfg.to_str().unwrap();
    ok_json(&["synth", "--config", cfg, "--out", "elsewhere"], cwd);
    assert!(cwd.join("elsewhere/stays.csv").exists());
    assert!(!cwd.join("data").exists());
}

#[test]
fn unknown_flags_print_usage_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["eval", "--config", "x.toml", "--bogus"][..], &["frobnicate"][..], &["train"][..]] {
        let out = modimg(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
}

#[test]
fn failed_validation_exits_1_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let missing = modimg(&["cohort", "--config", "absent.toml"], cwd);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());

    let bad = config(cwd, "lr_schedule = [0.1]");
    let out = modimg(&["synth", "--config", bad.to_str().unwrap()], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));

    // eval before any training
    let cfg = config(cwd, "");
    assert_eq!(modimg(&["eval", "--config", cfg.to_str().unwrap()], cwd).status.code(), Some(1));

    let threads = Command::new(BIN).args(["synth", "--config", cfg.to_str().unwrap()]).current_dir(cwd).env("MODIMG_THREADS", "many").output().unwrap();
    assert_eq!(threads.status.code(), Some(1));
}
