//! Command implementations behind the `cfjam` binary: dataset
//! generation, training, and evaluation with the optional tau sweep.
//! Every command echoes its fully-resolved configuration next to its
//! outputs so any artifact can be reproduced from its own metadata.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use cfjam_core::dataset::{generate_dataset, load_manifest, Split};
use cfjam_core::neural::{load_checkpoint, save_checkpoint, Checkpoint, Float};
use cfjam_core::training::{
    evaluate, load_prepared_split, sweep_tau, train, write_sweep_csv, write_train_log, Metrics,
    SweepRow,
};

pub use config::{parse_tau_set, RunConfig};

/// Generate the dataset described by the config and print its shape.
pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let (manifest, stats) = generate_dataset(
        &cfg.scenario,
        cfg.dataset.n_sequences,
        &cfg.dataset.tau_set,
        &cfg.scenario_tag(),
        &cfg.dataset_dir,
    )?;
    fs::write(cfg.dataset_dir.join("resolved.cfg"), cfg.render())?;

    println!("dataset written to {}", cfg.dataset_dir.display());
    println!(
        "scenario {}  digest {}",
        manifest.scenario, manifest.config_digest
    );
    println!(
        "sequences: {} clean, {} jammed",
        stats.n_clean, stats.n_jammed
    );
    for (tau, count) in &stats.per_tau {
        println!("  tau {tau:2}: {count} sequences");
    }
    println!(
        "splits: {} train / {} validation / {} test",
        manifest.split_ids(Split::Train).len(),
        manifest.split_ids(Split::Validation).len(),
        manifest.split_ids(Split::Test).len()
    );
    println!(
        "mean edges per snapshot: {:.3}",
        stats.mean_edges_per_snapshot
    );
    Ok(())
}

/// Train on the configured dataset; writes the checkpoint, an epoch
/// log beside it, and the resolved config.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let manifest_path = cfg.dataset_dir.join("manifest");
    if !manifest_path.exists() {
        bail!(
            "no dataset manifest at {} (run `cfjam generate` first)",
            manifest_path.display()
        );
    }
    let manifest = load_manifest(&manifest_path)?;
    let train_set = load_prepared_split::<f32>(&cfg.dataset_dir, &manifest, Split::Train)?;
    let val_set = load_prepared_split::<f32>(&cfg.dataset_dir, &manifest, Split::Validation)?;
    println!(
        "training on {} sequences, validating on {}",
        train_set.len(),
        val_set.len()
    );
    let outcome = train(&cfg.model, &cfg.train, &train_set, &val_set)?;

    if let Some(parent) = cfg.checkpoint_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    save_checkpoint(
        &outcome.params,
        &manifest.config_digest,
        &cfg.checkpoint_path,
    )?;
    let log_path = sibling(&cfg.checkpoint_path, "log");
    write_train_log(&outcome.log, &log_path)?;
    fs::write(sibling(&cfg.checkpoint_path, "resolved.cfg"), cfg.render())?;

    for r in &outcome.log {
        println!(
            "epoch {:3}  train_loss {:.4}  val_accuracy {:.4}  val_f1 {:.4}",
            r.epoch, r.train_loss, r.val_accuracy, r.val_f1
        );
    }
    println!(
        "best epoch {} (validation accuracy {:.4}); checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_accuracy,
        cfg.checkpoint_path.display()
    );
    Ok(())
}

/// Evaluate the checkpoint on the test split; with `sweep` also write
/// the per-tau table.
pub fn cmd_eval(cfg: &RunConfig, sweep: bool, eval_seed: u64) -> Result<()> {
    cfg.validate()?;
    let ck = load_checkpoint(&cfg.checkpoint_path)
        .with_context(|| format!("cannot load checkpoint {}", cfg.checkpoint_path.display()))?;
    let manifest = load_manifest(&cfg.dataset_dir.join("manifest"))?;
    if ck.dataset_digest != "-" && ck.dataset_digest != manifest.config_digest {
        eprintln!(
            "warning: checkpoint was trained on digest {}, dataset has {}",
            ck.dataset_digest, manifest.config_digest
        );
    }
    match ck.dtype.as_str() {
        "f64" => eval_typed::<f64>(cfg, ck, &manifest.config_digest, sweep, eval_seed),
        _ => eval_typed::<f32>(cfg, ck, &manifest.config_digest, sweep, eval_seed),
    }
}

fn eval_typed<F: Float>(
    cfg: &RunConfig,
    ck: Checkpoint,
    dataset_digest: &str,
    sweep: bool,
    eval_seed: u64,
) -> Result<()> {
    let params = ck.into_params::<F>();
    let manifest = load_manifest(&cfg.dataset_dir.join("manifest"))?;
    let test_set = load_prepared_split::<F>(&cfg.dataset_dir, &manifest, Split::Test)?;
    let metrics = evaluate(&params, &test_set, cfg.train.decision_threshold)?;

    fs::create_dir_all(&cfg.report_path)?;
    fs::write(cfg.report_path.join("resolved.cfg"), cfg.render())?;
    let report = render_metrics_report(&metrics, dataset_digest, test_set.len());
    fs::write(cfg.report_path.join("metrics.txt"), &report)?;
    print!("{report}");

    if sweep {
        let rows = sweep_tau(
            &params,
            &test_set,
            &cfg.dataset.tau_set,
            cfg.train.decision_threshold,
            eval_seed,
        )?;
        let csv_path = cfg.report_path.join("sweep.csv");
        write_sweep_csv(&rows, &csv_path)?;
        print_sweep(&rows);
        println!("sweep table written to {}", csv_path.display());
    }
    Ok(())
}

fn render_metrics_report(metrics: &Metrics, digest: &str, n: usize) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "test sequences: {n}");
    let _ = writeln!(o, "dataset digest: {digest}");
    let _ = writeln!(
        o,
        "confusion: tp {} tn {} fp {} fn {}",
        metrics.true_positives,
        metrics.true_negatives,
        metrics.false_positives,
        metrics.false_negatives
    );
    let _ = writeln!(o, "accuracy: {}", metrics.accuracy);
    let _ = writeln!(o, "f1: {}", metrics.f1);
    o
}

fn print_sweep(rows: &[SweepRow]) {
    println!("tau  accuracy  f1");
    for r in rows {
        println!(
            "{:3}  {:.4}    {:.4}",
            r.tau, r.metrics.accuracy, r.metrics.f1
        );
    }
}

/// `model.ckpt` -> `model.ckpt.<ext>`
fn sibling(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    std::path::PathBuf::from(s)
}
