//! Python bindings: the simulator configs, dataset generation, the
//! detector's training/evaluation entry points, and a few physics
//! helpers for sanity checks. Heavy work stays in Rust; Python sees
//! plain classes and tuples.

use std::path::{Path, PathBuf};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cfjam_core::channel;
use cfjam_core::dataset::{self, ScenarioConfig as CoreScenario};
use cfjam_core::neural::{self, Float, ModelConfig as CoreModel};
use cfjam_core::rng::SequenceRng;
use cfjam_core::training::{self, TrainConfig as CoreTrain};

fn to_py_err(e: cfjam_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Physical scenario parameters (defaults follow the experimental
/// setup: 1 km box, 5 APs, 10 UEs, 5 dB threshold, 80-step sequences).
#[pyclass(name = "ScenarioConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: CoreScenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (beta=1.0, seed=1, tau=10, n_steps=80, jammer_power=10.0, n_antennas=4))]
    fn new(
        beta: f64,
        seed: u64,
        tau: usize,
        n_steps: usize,
        jammer_power: f64,
        n_antennas: usize,
    ) -> PyResult<Self> {
        let inner = CoreScenario {
            beta,
            seed,
            tau,
            n_steps,
            jammer_power,
            n_antennas,
            ..CoreScenario::default()
        };
        inner.validate().map_err(to_py_err)?;
        Ok(PyScenario { inner })
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[setter]
    fn set_beta(&mut self, v: f64) {
        self.inner.beta = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn tau(&self) -> usize {
        self.inner.tau
    }

    #[setter]
    fn set_tau(&mut self, v: usize) {
        self.inner.tau = v;
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps
    }

    #[getter]
    fn n_aps(&self) -> usize {
        self.inner.n_aps
    }

    #[getter]
    fn n_ues(&self) -> usize {
        self.inner.n_ues
    }

    #[getter]
    fn jammer_power(&self) -> f64 {
        self.inner.jammer_power
    }

    #[setter]
    fn set_jammer_power(&mut self, v: f64) {
        self.inner.jammer_power = v;
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioConfig(beta={}, seed={}, tau={}, n_steps={})",
            self.inner.beta, self.inner.seed, self.inner.tau, self.inner.n_steps
        )
    }
}

/// Detector architecture (defaults follow the published setup).
#[pyclass(name = "ModelConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: CoreModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (hidden_dim=64, gcn_layers=2, encoder_layers=4, attention_heads=16, n_steps=80))]
    fn new(
        hidden_dim: usize,
        gcn_layers: usize,
        encoder_layers: usize,
        attention_heads: usize,
        n_steps: usize,
    ) -> PyResult<Self> {
        let inner = CoreModel {
            hidden_dim,
            gcn_layers,
            encoder_layers,
            attention_heads,
            n_steps,
            ..CoreModel::default()
        };
        inner.validate().map_err(to_py_err)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn hidden_dim(&self) -> usize {
        self.inner.hidden_dim
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps
    }

    fn parameter_count(&self) -> usize {
        neural::param_count(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(hidden_dim={}, gcn_layers={}, encoder_layers={}, heads={}, n_steps={})",
            self.inner.hidden_dim,
            self.inner.gcn_layers,
            self.inner.encoder_layers,
            self.inner.attention_heads,
            self.inner.n_steps
        )
    }
}

/// Optimization settings (Adam with decoupled weight decay).
#[pyclass(name = "TrainConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyTrain {
    inner: CoreTrain,
}

#[pymethods]
impl PyTrain {
    #[new]
    #[pyo3(signature = (epochs=30, learning_rate=1.2e-4, batch_size=8, seed=1, early_stop_patience=5))]
    fn new(
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
        early_stop_patience: usize,
    ) -> PyResult<Self> {
        let inner = CoreTrain {
            epochs,
            learning_rate,
            batch_size,
            seed,
            early_stop_patience,
            ..CoreTrain::default()
        };
        inner.validate().map_err(to_py_err)?;
        Ok(PyTrain { inner })
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.epochs
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainConfig(epochs={}, learning_rate={}, batch_size={}, seed={})",
            self.inner.epochs, self.inner.learning_rate, self.inner.batch_size, self.inner.seed
        )
    }
}

/// One simulated labeled sequence of graph snapshots.
#[pyclass(name = "GraphSequence")]
struct PySequence {
    inner: dataset::GraphSequence,
}

#[pymethods]
impl PySequence {
    #[getter]
    fn label(&self) -> bool {
        self.inner.label
    }

    #[getter]
    fn tau(&self) -> usize {
        self.inner.tau
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.snapshots.len()
    }

    #[getter]
    fn jammer_position(&self) -> Option<(f64, f64)> {
        self.inner.jammer_position
    }

    #[getter]
    fn config_digest(&self) -> String {
        self.inner.config_digest.clone()
    }

    /// Edge count of every snapshot, in time order.
    fn edge_counts(&self) -> Vec<usize> {
        self.inner.snapshots.iter().map(|s| s.edges.len()).collect()
    }

    /// Time steps where the jammer was active.
    fn active_steps(&self) -> Vec<usize> {
        self.inner
            .snapshots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.jammer_active)
            .map(|(i, _)| i)
            .collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dataset::save_sequence(&self.inner, &path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PySequence {
            inner: dataset::load_sequence(&path).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "GraphSequence(label={}, tau={}, n_steps={})",
            self.inner.label,
            self.inner.tau,
            self.inner.snapshots.len()
        )
    }
}

/// Confusion counts with accuracy and F1.
#[pyclass(name = "Metrics", skip_from_py_object)]
#[derive(Clone)]
struct PyMetrics {
    inner: training::Metrics,
}

#[pymethods]
impl PyMetrics {
    #[getter]
    fn tp(&self) -> usize {
        self.inner.true_positives
    }

    #[getter]
    fn tn(&self) -> usize {
        self.inner.true_negatives
    }

    #[getter]
    fn fp(&self) -> usize {
        self.inner.false_positives
    }

    #[getter]
    fn fn_(&self) -> usize {
        self.inner.false_negatives
    }

    #[getter]
    fn accuracy(&self) -> f64 {
        self.inner.accuracy
    }

    #[getter]
    fn f1(&self) -> f64 {
        self.inner.f1
    }

    fn __repr__(&self) -> String {
        format!(
            "Metrics(tp={}, tn={}, fp={}, fn={}, accuracy={:.4}, f1={:.4})",
            self.inner.true_positives,
            self.inner.true_negatives,
            self.inner.false_positives,
            self.inner.false_negatives,
            self.inner.accuracy,
            self.inner.f1
        )
    }
}

/// Per-entry channel variance d0^2 / distance^2.
#[pyfunction]
fn path_loss_variance(distance: f64, d0: f64) -> PyResult<f64> {
    channel::path_loss_variance(distance, d0).map_err(to_py_err)
}

/// Boolean activity pattern: tau consecutive active steps per frame.
#[pyfunction]
fn jammer_schedule(n_steps: usize, steps_per_frame: usize, tau: usize) -> PyResult<Vec<bool>> {
    dataset::jammer_schedule(n_steps, steps_per_frame, tau).map_err(to_py_err)
}

/// Simulate one sequence; `sequence_index` selects the random stream
/// under the scenario's seed.
#[pyfunction]
#[pyo3(signature = (scenario, jammed, sequence_index=0))]
fn generate_sequence(
    scenario: &PyScenario,
    jammed: bool,
    sequence_index: u64,
) -> PyResult<PySequence> {
    let mut rng = SequenceRng::for_sequence(scenario.inner.seed, sequence_index);
    Ok(PySequence {
        inner: dataset::generate_sequence(&scenario.inner, jammed, &mut rng).map_err(to_py_err)?,
    })
}

/// Generate a labeled dataset directory; returns
/// (n_clean, n_jammed, mean_edges_per_snapshot).
#[pyfunction]
#[pyo3(signature = (scenario, n_sequences, tau_set, out_dir, tag=None))]
fn generate_dataset(
    scenario: &PyScenario,
    n_sequences: usize,
    tau_set: Vec<usize>,
    out_dir: PathBuf,
    tag: Option<String>,
) -> PyResult<(usize, usize, f64)> {
    let tag = tag.unwrap_or_else(|| format!("beta{}", scenario.inner.beta));
    let (_, stats) =
        dataset::generate_dataset(&scenario.inner, n_sequences, &tau_set, &tag, &out_dir)
            .map_err(to_py_err)?;
    Ok((stats.n_clean, stats.n_jammed, stats.mean_edges_per_snapshot))
}

/// Train on a dataset directory and write a checkpoint; returns
/// (best_epoch, best_val_accuracy, epochs_run).
#[pyfunction]
fn train(
    model: &PyModel,
    train_config: &PyTrain,
    dataset_dir: PathBuf,
    checkpoint_path: PathBuf,
) -> PyResult<(usize, f64, usize)> {
    let (outcome, manifest) =
        training::train_from_dir::<f32>(&model.inner, &train_config.inner, &dataset_dir)
            .map_err(to_py_err)?;
    neural::save_checkpoint(&outcome.params, &manifest.config_digest, &checkpoint_path)
        .map_err(to_py_err)?;
    Ok((
        outcome.best_epoch,
        outcome.best_val_accuracy,
        outcome.log.len(),
    ))
}

fn with_checkpoint<T>(
    checkpoint_path: &Path,
    f32_case: impl FnOnce(neural::ModelParams<f32>) -> PyResult<T>,
    f64_case: impl FnOnce(neural::ModelParams<f64>) -> PyResult<T>,
) -> PyResult<T> {
    let ck = neural::load_checkpoint(checkpoint_path).map_err(to_py_err)?;
    match ck.dtype.as_str() {
        "f64" => f64_case(ck.into_params::<f64>()),
        _ => f32_case(ck.into_params::<f32>()),
    }
}

fn eval_typed<F: Float>(
    params: neural::ModelParams<F>,
    dataset_dir: &Path,
    threshold: f64,
) -> PyResult<PyMetrics> {
    let manifest = dataset::load_manifest(&dataset_dir.join("manifest")).map_err(to_py_err)?;
    let test = training::load_prepared_split::<F>(dataset_dir, &manifest, dataset::Split::Test)
        .map_err(to_py_err)?;
    Ok(PyMetrics {
        inner: training::evaluate(&params, &test, threshold).map_err(to_py_err)?,
    })
}

/// Evaluate a checkpoint on a dataset's test split.
#[pyfunction]
#[pyo3(signature = (checkpoint_path, dataset_dir, decision_threshold=0.5))]
fn evaluate(
    checkpoint_path: PathBuf,
    dataset_dir: PathBuf,
    decision_threshold: f64,
) -> PyResult<PyMetrics> {
    with_checkpoint(
        &checkpoint_path,
        |p| eval_typed(p, &dataset_dir, decision_threshold),
        |p| eval_typed(p, &dataset_dir, decision_threshold),
    )
}

fn sweep_typed<F: Float>(
    params: neural::ModelParams<F>,
    dataset_dir: &Path,
    tau_set: &[usize],
    threshold: f64,
    seed: u64,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let manifest = dataset::load_manifest(&dataset_dir.join("manifest")).map_err(to_py_err)?;
    let test = training::load_prepared_split::<F>(dataset_dir, &manifest, dataset::Split::Test)
        .map_err(to_py_err)?;
    let rows = training::sweep_tau(&params, &test, tau_set, threshold, seed).map_err(to_py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.tau, r.metrics.accuracy, r.metrics.f1))
        .collect())
}

/// Per-tau balanced evaluation; returns [(tau, accuracy, f1), ...].
#[pyfunction]
#[pyo3(signature = (checkpoint_path, dataset_dir, tau_set, decision_threshold=0.5, seed=1))]
fn sweep_tau(
    checkpoint_path: PathBuf,
    dataset_dir: PathBuf,
    tau_set: Vec<usize>,
    decision_threshold: f64,
    seed: u64,
) -> PyResult<Vec<(usize, f64, f64)>> {
    with_checkpoint(
        &checkpoint_path,
        |p| sweep_typed(p, &dataset_dir, &tau_set, decision_threshold, seed),
        |p| sweep_typed(p, &dataset_dir, &tau_set, decision_threshold, seed),
    )
}

/// Classify one sequence; returns (p_clean, p_jammed).
#[pyfunction]
fn forward(checkpoint_path: PathBuf, sequence: &PySequence) -> PyResult<(f64, f64)> {
    fn go<F: Float>(
        params: neural::ModelParams<F>,
        seq: &dataset::GraphSequence,
    ) -> PyResult<(f64, f64)> {
        let probs =
            neural::forward(seq, &params, &mut neural::ModelRng::Eval).map_err(to_py_err)?;
        Ok((probs[0], probs[1]))
    }
    with_checkpoint(
        &checkpoint_path,
        |p| go(p, &sequence.inner),
        |p| go(p, &sequence.inner),
    )
}

#[pymodule]
fn cfjam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrain>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyMetrics>()?;
    m.add_function(wrap_pyfunction!(path_loss_variance, m)?)?;
    m.add_function(wrap_pyfunction!(jammer_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(generate_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_tau, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    Ok(())
}
