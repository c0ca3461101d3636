//! Supervised training of the detector: Adam with decoupled weight
//! decay, seeded shuffling and dropout streams, accuracy-based early
//! stopping, confusion-matrix metrics, and the per-tau evaluation
//! sweep.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{load_manifest, load_sequence, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::neural::model::{forward_prepared, loss_and_grads, ModelRng};
use crate::neural::{Float, ModelConfig, ModelParams, PreparedSequence, Tensor};
use crate::rng::stream;

/// Stream block used for per-epoch shuffles.
const SHUFFLE_STREAM_BASE: u64 = 1 << 32;
/// Stream block used for per-visit dropout masks.
const DROPOUT_STREAM_BASE: u64 = 1 << 33;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Epochs without a new validation best before stopping;
    /// `usize::MAX` disables early stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub decision_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 1.2e-4,
            weight_decay: 1e-6,
            batch_size: 8,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            early_stop_patience: 5,
            seed: 1,
            decision_threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0,1), got {b}")));
            }
        }
        if self.adam_epsilon <= 0.0 {
            return Err(Error::Config("adam_epsilon must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.decision_threshold) {
            return Err(Error::Config(format!(
                "decision_threshold must be in [0,1), got {}",
                self.decision_threshold
            )));
        }
        Ok(())
    }
}

/// Confusion counts plus the derived accuracy and F1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub true_positives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub accuracy: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Metrics {
        let total = tp + tn + fp + fn_;
        let accuracy = if total == 0 {
            0.0
        } else {
            (tp + tn) as f64 / total as f64
        };
        // 2TP / (2TP + FP + FN); all-negative-and-correct counts as 1.
        let f1 = if 2 * tp + fp + fn_ == 0 {
            1.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        Metrics {
            true_positives: tp,
            true_negatives: tn,
            false_positives: fp,
            false_negatives: fn_,
            accuracy,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.true_negatives + self.false_positives + self.false_negatives
    }
}

/// Adam moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<F: Float> {
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Float> AdamState<F> {
    pub fn new(params: &ModelParams<F>) -> Self {
        AdamState {
            m: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
            v: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }
}

/// One Adam update with bias correction; decoupled weight decay is
/// applied to the parameters before the moment update.
pub fn adam_step<F: Float>(
    params: &mut ModelParams<F>,
    grads: &[Tensor<F>],
    state: &mut AdamState<F>,
    step_index: usize,
    config: &TrainConfig,
) -> Result<()> {
    if step_index == 0 {
        return Err(Error::Config("adam step_index starts at 1".into()));
    }
    if grads.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient tensors for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    let lr = F::from_f64(config.learning_rate);
    let wd = F::from_f64(config.weight_decay);
    let b1 = F::from_f64(config.adam_beta1);
    let b2 = F::from_f64(config.adam_beta2);
    let eps = F::from_f64(config.adam_epsilon);
    let bias1 = F::from_f64(1.0 - config.adam_beta1.powi(step_index as i32));
    let bias2 = F::from_f64(1.0 - config.adam_beta2.powi(step_index as i32));
    let one = F::ONE;

    for ((theta, g), (m, v)) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if theta.shape() != g.shape() {
            return Err(Error::DimensionMismatch(format!(
                "gradient shape {:?} for parameter shape {:?}",
                g.shape(),
                theta.shape()
            )));
        }
        let td = theta.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..td.len() {
            td[i] = td[i] * (one - lr * wd);
            md[i] = b1 * md[i] + (one - b1) * gd[i];
            vd[i] = b2 * vd[i] + (one - b2) * gd[i] * gd[i];
            let m_hat = md[i] / bias1;
            let v_hat = vd[i] / bias2;
            td[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F: Float> {
    pub params: ModelParams<F>,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Train on prepared sequences. Shuffling, dropout and initialization
/// all derive from `train_config.seed`, so identical inputs give
/// bit-identical outcomes.
pub fn train<F: Float>(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &[PreparedSequence<F>],
    val_set: &[PreparedSequence<F>],
) -> Result<TrainOutcome<F>> {
    model_config.validate()?;
    train_config.validate()?;
    if train_set.is_empty() {
        return Err(Error::MissingData("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::MissingData("validation split is empty".into()));
    }

    let mut params: ModelParams<F> = ModelParams::init(model_config, train_config.seed)?;
    let mut adam = AdamState::new(&params);
    let mut log = Vec::new();

    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_loss = f64::INFINITY;
    let mut stale = 0usize;
    let mut step = 0usize;
    let mut visit = 0u64;

    for epoch in 1..=train_config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = stream(train_config.seed, SHUFFLE_STREAM_BASE + epoch as u64);
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut batch_losses = Vec::new();
        for batch in order.chunks(train_config.batch_size) {
            // Dropout streams are assigned per visit before the parallel
            // section so thread scheduling cannot reorder them.
            let items: Vec<(usize, u64)> = batch
                .iter()
                .map(|&idx| {
                    let s = DROPOUT_STREAM_BASE + visit;
                    visit += 1;
                    (idx, s)
                })
                .collect();
            let results: Vec<Result<(f64, Vec<Tensor<F>>)>> = items
                .par_iter()
                .map(|&(idx, strm)| {
                    let mut rng = stream(train_config.seed, strm);
                    loss_and_grads(&train_set[idx], &params, &mut ModelRng::Train(&mut rng))
                })
                .collect();

            let inv = F::from_f64(1.0 / batch.len() as f64);
            let mut mean_loss = 0.0;
            let mut mean_grads: Option<Vec<Tensor<F>>> = None;
            for r in results {
                let (loss, grads) = r?;
                mean_loss += loss;
                match &mut mean_grads {
                    None => mean_grads = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g);
                        }
                    }
                }
            }
            let mut grads = mean_grads.expect("nonempty batch");
            for g in grads.iter_mut() {
                for x in g.data_mut() {
                    *x *= inv;
                }
            }
            mean_loss /= batch.len() as f64;
            batch_losses.push(mean_loss);

            step += 1;
            adam_step(&mut params, &grads, &mut adam, step, train_config)?;
        }

        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let (val_metrics, val_loss) =
            evaluate_with_loss(&params, val_set, train_config.decision_threshold)?;
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy: val_metrics.accuracy,
            val_f1: val_metrics.f1,
        });

        // Patience counts strict accuracy improvements only; an equal
        // accuracy with lower loss still refreshes the kept checkpoint.
        let better_accuracy = val_metrics.accuracy > best_acc;
        if better_accuracy || (val_metrics.accuracy == best_acc && val_loss < best_loss) {
            best_params = params.clone();
            best_epoch = epoch;
            best_acc = val_metrics.accuracy;
            best_loss = val_loss;
        }
        if better_accuracy {
            stale = 0;
        } else {
            stale += 1;
            if stale >= train_config.early_stop_patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        log,
        best_epoch,
        best_val_accuracy: best_acc,
    })
}

/// Classify every sequence and tally the confusion matrix.
pub fn evaluate<F: Float>(
    params: &ModelParams<F>,
    sequences: &[PreparedSequence<F>],
    decision_threshold: f64,
) -> Result<Metrics> {
    Ok(evaluate_with_loss(params, sequences, decision_threshold)?.0)
}

fn evaluate_with_loss<F: Float>(
    params: &ModelParams<F>,
    sequences: &[PreparedSequence<F>],
    decision_threshold: f64,
) -> Result<(Metrics, f64)> {
    if sequences.is_empty() {
        return Err(Error::MissingData("evaluation set is empty".into()));
    }
    let outcomes: Vec<Result<(bool, bool, f64)>> = sequences
        .par_iter()
        .map(|prep| {
            let probs = forward_prepared(prep, params, &mut ModelRng::Eval)?;
            let predicted = probs[1] > decision_threshold;
            let loss = -probs[prep.label as usize].max(1e-12).ln();
            Ok((prep.label, predicted, loss))
        })
        .collect();
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    let mut loss_sum = 0.0;
    for o in outcomes {
        let (label, predicted, loss) = o?;
        loss_sum += loss;
        match (label, predicted) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
    }
    Ok((
        Metrics::from_counts(tp, tn, fp, fn_),
        loss_sum / sequences.len() as f64,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: usize,
    pub metrics: Metrics,
}

/// Evaluate per tau: each row pairs that tau's jammed test sequences
/// with an equal number of clean ones drawn deterministically from the
/// seed.
pub fn sweep_tau<F: Float>(
    params: &ModelParams<F>,
    test_set: &[PreparedSequence<F>],
    tau_set: &[usize],
    decision_threshold: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let clean: Vec<&PreparedSequence<F>> = test_set.iter().filter(|p| !p.label).collect();
    if clean.is_empty() {
        return Err(Error::MissingData(
            "no clean sequences in the test set".into(),
        ));
    }
    let mut taus = tau_set.to_vec();
    taus.sort_unstable();
    taus.dedup();

    let mut rows = Vec::with_capacity(taus.len());
    for tau in taus {
        let jammed: Vec<&PreparedSequence<F>> = test_set
            .iter()
            .filter(|p| p.label && p.tau == tau)
            .collect();
        if jammed.is_empty() {
            return Err(Error::MissingData(format!(
                "no jammed test sequences with tau = {tau}"
            )));
        }
        let k = jammed.len().min(clean.len());
        let mut idx: Vec<usize> = (0..clean.len()).collect();
        let mut rng = stream(seed, tau as u64);
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        let subset: Vec<PreparedSequence<F>> = jammed
            .iter()
            .take(k)
            .chain(idx[..k].iter().map(|&i| &clean[i]))
            .map(|&p| p.clone())
            .collect();
        let metrics = evaluate(params, &subset, decision_threshold)?;
        rows.push(SweepRow { tau, metrics });
    }
    Ok(rows)
}

/// One `epoch ...` record per line; identical runs write identical
/// bytes.
pub fn write_train_log(log: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in log {
        let _ = writeln!(
            out,
            "epoch {} train_loss {} val_accuracy {} val_f1 {}",
            r.epoch, r.train_loss, r.val_accuracy, r.val_f1
        );
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::from("tau,accuracy,f1\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.tau, r.metrics.accuracy, r.metrics.f1);
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Load and prepare one split of a dataset directory.
pub fn load_prepared_split<F: Float>(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<PreparedSequence<F>>> {
    manifest
        .entries_in(split)
        .map(|e| {
            let seq = load_sequence(&dir.join(&e.file))?;
            PreparedSequence::from_sequence(&seq)
        })
        .collect()
}

/// Train straight from a dataset directory (train + validation splits).
pub fn train_from_dir<F: Float>(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dir: &Path,
) -> Result<(TrainOutcome<F>, DatasetManifest)> {
    let manifest = load_manifest(&dir.join("manifest"))?;
    let train_set: Vec<PreparedSequence<F>> = load_prepared_split(dir, &manifest, Split::Train)?;
    let val_set: Vec<PreparedSequence<F>> = load_prepared_split(dir, &manifest, Split::Validation)?;
    let outcome = train(model_config, train_config, &train_set, &val_set)?;
    Ok((outcome, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_sequence, ScenarioConfig};
    use crate::rng::SequenceRng;

    #[test]
    fn metrics_identities() {
        let m = Metrics::from_counts(2, 0, 1, 1);
        assert!((m.f1 - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(m.total(), 4);

        let m = Metrics::from_counts(8, 1, 0, 1);
        assert!((m.accuracy - 0.9).abs() < 1e-12);

        let perfect = Metrics::from_counts(5, 5, 0, 0);
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.f1, 1.0);

        // All-true-negative: F1 defined as 1.
        let all_tn = Metrics::from_counts(0, 7, 0, 0);
        assert_eq!(all_tn.f1, 1.0);
        assert_eq!(all_tn.accuracy, 1.0);

        // No true positives but errors present: F1 = 0.
        let bad = Metrics::from_counts(0, 3, 2, 1);
        assert_eq!(bad.f1, 0.0);
    }

    fn scalar_params(values: &[f64]) -> (ModelParams<f64>, ModelConfig) {
        // Tiny config so the first tensor has a handful of scalars.
        let config = ModelConfig {
            hidden_dim: 2,
            gcn_layers: 1,
            gcn_prop_steps: 1,
            encoder_layers: 1,
            attention_heads: 1,
            ffn_dim: 2,
            classifier_hidden: 2,
            n_steps: 2,
            node_feature_dim: values.len(),
            edge_feature_dim: 2,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&config, 0).unwrap();
        (params, config)
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let (mut params, _) = scalar_params(&[1, 2].map(|x| x as f64));
        let cfg = TrainConfig {
            weight_decay: 0.0,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let mut state = AdamState::new(&params);
        let before = params.tensors()[0].clone();
        let grads: Vec<Tensor<f64>> = params
            .tensors()
            .iter()
            .map(|t| {
                Tensor::from_vec(
                    t.shape(),
                    (0..t.len())
                        .map(|i| if i % 2 == 0 { 2.0 } else { -3.0 })
                        .collect(),
                )
            })
            .collect();
        adam_step(&mut params, &grads, &mut state, 1, &cfg).unwrap();
        for (i, (&b, &a)) in before
            .data()
            .iter()
            .zip(params.tensors()[0].data())
            .enumerate()
        {
            let expect = if i % 2 == 0 { b - 0.01 } else { b + 0.01 };
            assert!((a - expect).abs() < 1e-6, "coordinate {i}: {a} vs {expect}");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let (mut params, _) = scalar_params(&[1.0, 2.0]);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut state = AdamState::new(&params);
        let before = params.clone();
        let grads: Vec<Tensor<f64>> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        adam_step(&mut params, &grads, &mut state, 1, &cfg).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_three_steps_match_hand_recurrence() {
        // Scalar oracle: the Adam recurrences written out directly.
        let cfg = TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            ..TrainConfig::default()
        };
        let gs = [0.5, -0.2, 0.8];
        let mut theta = 1.0f64;
        let mut m = 0.0f64;
        let mut v = 0.0f64;
        for (t, &g) in gs.iter().enumerate() {
            let t = t + 1;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32));
            theta -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        }

        let (mut params, _) = scalar_params(&[1.0, 2.0]);
        // Overwrite the first scalar with 1.0 and drive it alone.
        params.tensors_mut()[0].data_mut()[0] = 1.0;
        let mut state = AdamState::new(&params);
        for (t, &g) in gs.iter().enumerate() {
            let grads: Vec<Tensor<f64>> = params
                .tensors()
                .iter()
                .enumerate()
                .map(|(i, tt)| {
                    let mut z = Tensor::zeros(tt.shape());
                    if i == 0 {
                        z.data_mut()[0] = g;
                    }
                    z
                })
                .collect();
            adam_step(&mut params, &grads, &mut state, t + 1, &cfg).unwrap();
        }
        let got = params.tensors()[0].data()[0];
        assert!((got - theta).abs() < 1e-12, "{got} vs {theta}");
    }

    #[test]
    fn adam_rejects_mismatched_gradients() {
        let (mut params, _) = scalar_params(&[1.0, 2.0]);
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(&params);
        let grads: Vec<Tensor<f64>> = vec![Tensor::zeros(&[1, 1])];
        assert!(adam_step(&mut params, &grads, &mut state, 1, &cfg).is_err());
    }

    fn toy_prepared(n: usize, n_steps: usize, seed: u64) -> Vec<PreparedSequence<f32>> {
        let cfg = ScenarioConfig {
            n_steps,
            seed,
            ..ScenarioConfig::default()
        };
        (0..n)
            .map(|i| {
                let mut rng = SequenceRng::for_sequence(seed, i as u64);
                let seq = generate_sequence(&cfg, i % 2 == 1, &mut rng).unwrap();
                PreparedSequence::from_sequence(&seq).unwrap()
            })
            .collect()
    }

    fn toy_model(n_steps: usize) -> ModelConfig {
        ModelConfig {
            hidden_dim: 8,
            gcn_layers: 1,
            gcn_prop_steps: 1,
            encoder_layers: 1,
            attention_heads: 2,
            ffn_dim: 16,
            classifier_hidden: 4,
            n_steps,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_runs_all_epochs_without_patience() {
        let data = toy_prepared(6, 10, 42);
        let (train_set, val_set) = data.split_at(4);
        let mc = toy_model(10);
        let tc = TrainConfig {
            epochs: 3,
            early_stop_patience: usize::MAX,
            seed: 7,
            ..TrainConfig::default()
        };
        let a = train(&mc, &tc, train_set, val_set).unwrap();
        let b = train(&mc, &tc, train_set, val_set).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        assert_eq!(a.log.len(), 3);
    }

    #[test]
    fn zero_learning_would_freeze_parameters() {
        // learning_rate must be positive by contract; the invariant
        // "lr=0, wd=0 leaves parameters fixed" is checked through Adam
        // directly with a zero-gradient step instead.
        let tc = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(tc.validate().is_err());
    }

    #[test]
    fn early_stopping_returns_best_checkpoint() {
        let data = toy_prepared(8, 10, 43);
        let (train_set, val_set) = data.split_at(6);
        let mc = toy_model(10);
        let tc = TrainConfig {
            epochs: 6,
            early_stop_patience: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(&mc, &tc, train_set, val_set).unwrap();
        let best_logged = out
            .log
            .iter()
            .map(|r| r.val_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best_val_accuracy, best_logged);
        assert!(out.log.len() <= 6);
    }

    #[test]
    fn evaluate_counts_confusion_matrix() {
        let data = toy_prepared(6, 10, 44);
        let mc = toy_model(10);
        let params: ModelParams<f32> = ModelParams::init(&mc, 1).unwrap();
        let m = evaluate(&params, &data, 0.5).unwrap();
        assert_eq!(m.total(), 6);
        assert_eq!(
            m.true_positives + m.false_negatives,
            data.iter().filter(|p| p.label).count()
        );
    }

    #[test]
    fn constant_clean_classifier_scores_half_on_balanced_sweep() {
        let data = toy_prepared(12, 10, 45);
        let mc = toy_model(10);
        let mut params: ModelParams<f32> = ModelParams::init(&mc, 1).unwrap();
        // Zero the output projection and pin its bias so softmax always
        // favors the clean class.
        for x in params.get_mut("cls.w2").data_mut() {
            *x = 0.0;
        }
        params.get_mut("cls.b2").data_mut()[0] = 5.0;
        params.get_mut("cls.b2").data_mut()[1] = -5.0;

        let taus: Vec<usize> = data.iter().filter(|p| p.label).map(|p| p.tau).collect();
        let rows = sweep_tau(&params, &data, &taus, 0.5, 9).unwrap();
        assert_eq!(rows.len(), 1, "toy data uses a single tau");
        assert!((rows[0].metrics.accuracy - 0.5).abs() < 1e-12);
        assert_eq!(rows[0].metrics.f1, 0.0);
    }

    #[test]
    fn sweep_rejects_missing_tau_bucket() {
        let data = toy_prepared(6, 10, 46);
        let mc = toy_model(10);
        let params: ModelParams<f32> = ModelParams::init(&mc, 1).unwrap();
        assert!(matches!(
            sweep_tau(&params, &data, &[3], 0.5, 1),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn log_and_sweep_files_have_documented_shapes() {
        let log = vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            val_accuracy: 0.75,
            val_f1: 0.7,
        }];
        let dir = std::env::temp_dir().join("cfjam-test-logs");
        fs::create_dir_all(&dir).unwrap();
        let lpath = dir.join("train.log");
        write_train_log(&log, &lpath).unwrap();
        let text = fs::read_to_string(&lpath).unwrap();
        assert_eq!(
            text,
            "epoch 1 train_loss 0.5 val_accuracy 0.75 val_f1 0.7\n"
        );

        let rows = vec![SweepRow {
            tau: 3,
            metrics: Metrics::from_counts(1, 1, 0, 0),
        }];
        let cpath = dir.join("sweep.csv");
        write_sweep_csv(&rows, &cpath).unwrap();
        let text = fs::read_to_string(&cpath).unwrap();
        assert_eq!(text, "tau,accuracy,f1\n3,1,1\n");
    }
}
