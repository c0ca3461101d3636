//! End-to-end runs of the generate / train / eval pipeline at toy
//! scale, exercising the binary's command layer directly.

use std::fs;
use std::path::Path;

use cfjam_cli::{cmd_eval, cmd_generate, cmd_train, RunConfig};
use cfjam_core::dataset::load_manifest;

fn toy_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.n_steps = 20;
    cfg.scenario.seed = 11;
    cfg.model.n_steps = 20;
    cfg.model.hidden_dim = 8;
    cfg.model.gcn_layers = 1;
    cfg.model.gcn_prop_steps = 1;
    cfg.model.encoder_layers = 1;
    cfg.model.attention_heads = 2;
    cfg.model.ffn_dim = 16;
    cfg.model.classifier_hidden = 4;
    cfg.dataset.n_sequences = 20;
    cfg.dataset.tau_set = vec![10];
    cfg.train.epochs = 2;
    cfg.train.seed = 3;
    cfg.dataset_dir = root.join("data");
    cfg.checkpoint_path = root.join("out/model.ckpt");
    cfg.report_path = root.join("report");
    cfg
}

#[test]
fn generate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());

    cmd_generate(&cfg).unwrap();
    let manifest = load_manifest(&cfg.dataset_dir.join("manifest")).unwrap();
    assert_eq!(manifest.sequences.len(), 20);
    assert!(cfg.dataset_dir.join("resolved.cfg").exists());

    cmd_train(&cfg).unwrap();
    assert!(cfg.checkpoint_path.exists());
    let log = fs::read_to_string(dir.path().join("out/model.ckpt.log")).unwrap();
    assert!(log.lines().count() <= 2);
    assert!(log.starts_with("epoch 1 train_loss "));

    cmd_eval(&cfg, true, 7).unwrap();
    let metrics = fs::read_to_string(cfg.report_path.join("metrics.txt")).unwrap();
    assert!(metrics.contains("confusion: tp"));
    assert!(metrics.contains("accuracy: "));
    let sweep = fs::read_to_string(cfg.report_path.join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some("tau,accuracy,f1"));
    assert_eq!(lines.count(), 1, "one tau bucket requested");
}

#[test]
fn train_without_dataset_names_the_expected_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let err = cmd_train(&cfg).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("manifest"), "message: {msg}");
    assert!(
        msg.contains(cfg.dataset_dir.to_str().unwrap()),
        "message: {msg}"
    );
}

#[test]
fn training_is_reproducible_at_the_command_level() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(dir.path());
    cmd_generate(&cfg).unwrap();

    cmd_train(&cfg).unwrap();
    let first = fs::read(&cfg.checkpoint_path).unwrap();
    let first_log = fs::read(dir.path().join("out/model.ckpt.log")).unwrap();

    cfg.checkpoint_path = dir.path().join("out2/model.ckpt");
    cmd_train(&cfg).unwrap();
    let second = fs::read(&cfg.checkpoint_path).unwrap();
    let second_log = fs::read(dir.path().join("out2/model.ckpt.log")).unwrap();

    assert_eq!(first, second, "checkpoints differ between identical runs");
    assert_eq!(first_log, second_log);
}

#[test]
fn eval_warns_but_succeeds_on_digest_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    cmd_generate(&cfg).unwrap();
    cmd_train(&cfg).unwrap();

    // Second dataset with a different seed: new digest, same shapes.
    let mut other = cfg.clone();
    other.scenario.seed = 99;
    other.dataset_dir = dir.path().join("data2");
    cmd_generate(&other).unwrap();

    let mut eval_cfg = cfg.clone();
    eval_cfg.dataset_dir = other.dataset_dir.clone();
    eval_cfg.report_path = dir.path().join("report2");
    cmd_eval(&eval_cfg, false, 7).unwrap();
    assert!(eval_cfg.report_path.join("metrics.txt").exists());
}
