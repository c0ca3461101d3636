//! Flat key=value run configuration with section headers.
//!
//! Sections mirror the library modules: `[scenario]`, `[dataset]`,
//! `[model]`, `[train]`, `[run]`. Every key has a default matching the
//! experimental setup, so an empty (or absent) file is a complete
//! configuration. Unknown sections or keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use cfjam_core::dataset::{BurstOffset, ScenarioConfig};
use cfjam_core::mobility::VelocitySupport;
use cfjam_core::neural::ModelConfig;
use cfjam_core::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub n_sequences: usize,
    pub tau_set: Vec<usize>,
    /// Scenario tag recorded in the manifest; derived when empty.
    pub tag: String,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            n_sequences: 2200,
            tau_set: (1..=10).collect(),
            tag: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub dataset: DatasetOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset_dir: PathBuf,
    pub checkpoint_path: PathBuf,
    pub report_path: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioConfig::default(),
            dataset: DatasetOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            dataset_dir: PathBuf::from("dataset"),
            checkpoint_path: PathBuf::from("model.ckpt"),
            report_path: PathBuf::from("report"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg = RunConfig::default();
        let mut model_steps_set = false;
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !matches!(
                    section.as_str(),
                    "scenario" | "dataset" | "model" | "train" | "run"
                ) {
                    bail!("line {}: unknown section [{section}]", lineno + 1);
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("line {}: expected 'key = value', got '{line}'", lineno + 1)
            })?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                bail!(
                    "line {}: key '{key}' appears before any [section]",
                    lineno + 1
                );
            }
            if section == "model" && key == "n_steps" {
                model_steps_set = true;
            }
            cfg.set(&section, key, value)
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        if !model_steps_set {
            cfg.model.n_steps = cfg.scenario.n_steps;
        }
        Ok(cfg)
    }

    /// Apply one `section.key = value` assignment.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match section {
            "scenario" => self.set_scenario(key, value),
            "dataset" => self.set_dataset(key, value),
            "model" => self.set_model(key, value),
            "train" => self.set_train(key, value),
            "run" => self.set_run(key, value),
            _ => bail!("unknown section [{section}]"),
        }
    }

    fn set_scenario(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.scenario;
        match key {
            "n_aps" => s.n_aps = num(key, value)?,
            "n_ues" => s.n_ues = num(key, value)?,
            "ap_positions" => s.ap_positions = parse_positions(value)?,
            "area_side" => s.area_side = num(key, value)?,
            "beta" => s.beta = num(key, value)?,
            "noise_power" => s.noise_power = num(key, value)?,
            "threshold_db" => s.threshold_db = num(key, value)?,
            "v_max_kmh" => s.v_max = num::<f64>(key, value)? / 3.6,
            "v_max_mps" => s.v_max = num(key, value)?,
            "sigma_w" => s.sigma_w = num(key, value)?,
            "sample_time" => s.sample_time = num(key, value)?,
            "frame_duration" => s.frame_duration = num(key, value)?,
            "n_steps" => s.n_steps = num(key, value)?,
            "tau" => s.tau = num(key, value)?,
            "jammer_power" => s.jammer_power = num(key, value)?,
            "jammer_radius" => s.jammer_radius = num(key, value)?,
            "seed" => s.seed = num(key, value)?,
            "n_antennas" => s.n_antennas = num(key, value)?,
            "d0" => s.d0 = num(key, value)?,
            "d_min" => s.d_min = num(key, value)?,
            "velocity_support" => {
                s.velocity_support = match value {
                    "signed" => VelocitySupport::Signed,
                    "positive" => VelocitySupport::Positive,
                    _ => bail!("velocity_support must be 'signed' or 'positive', got '{value}'"),
                }
            }
            "burst_offset" => {
                s.burst_offset = match value {
                    "fixed" => BurstOffset::Fixed,
                    "uniform-random" => BurstOffset::UniformRandom,
                    _ => bail!("burst_offset must be 'fixed' or 'uniform-random', got '{value}'"),
                }
            }
            _ => bail!("unknown key '{key}' in [scenario]"),
        }
        Ok(())
    }

    fn set_dataset(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_sequences" => self.dataset.n_sequences = num(key, value)?,
            "tau_set" => self.dataset.tau_set = parse_tau_set(value)?,
            "tag" => self.dataset.tag = value.to_string(),
            _ => bail!("unknown key '{key}' in [dataset]"),
        }
        Ok(())
    }

    fn set_model(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "hidden_dim" => m.hidden_dim = num(key, value)?,
            "gcn_layers" => m.gcn_layers = num(key, value)?,
            "gcn_prop_steps" => m.gcn_prop_steps = num(key, value)?,
            "encoder_layers" => m.encoder_layers = num(key, value)?,
            "attention_heads" => m.attention_heads = num(key, value)?,
            "ffn_dim" => m.ffn_dim = num(key, value)?,
            "classifier_hidden" => m.classifier_hidden = num(key, value)?,
            "dropout_attn" => m.dropout_attn = num(key, value)?,
            "dropout_global" => m.dropout_global = num(key, value)?,
            "n_steps" => m.n_steps = num(key, value)?,
            "node_feature_dim" => m.node_feature_dim = num(key, value)?,
            "edge_feature_dim" => m.edge_feature_dim = num(key, value)?,
            _ => bail!("unknown key '{key}' in [model]"),
        }
        Ok(())
    }

    fn set_train(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = num(key, value)?,
            "learning_rate" => t.learning_rate = num(key, value)?,
            "weight_decay" => t.weight_decay = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "adam_beta1" => t.adam_beta1 = num(key, value)?,
            "adam_beta2" => t.adam_beta2 = num(key, value)?,
            "adam_epsilon" => t.adam_epsilon = num(key, value)?,
            "early_stop_patience" => {
                t.early_stop_patience = if value == "none" {
                    usize::MAX
                } else {
                    num(key, value)?
                }
            }
            "seed" => t.seed = num(key, value)?,
            "decision_threshold" => t.decision_threshold = num(key, value)?,
            _ => bail!("unknown key '{key}' in [train]"),
        }
        Ok(())
    }

    fn set_run(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "checkpoint_path" => self.checkpoint_path = PathBuf::from(value),
            "report_path" => self.report_path = PathBuf::from(value),
            _ => bail!("unknown key '{key}' in [run]"),
        }
        Ok(())
    }

    /// Scenario tag for the manifest; derives one when not configured.
    pub fn scenario_tag(&self) -> String {
        if !self.dataset.tag.is_empty() {
            return self.dataset.tag.clone();
        }
        let taus = &self.dataset.tau_set;
        let lo = taus.iter().min().copied().unwrap_or(0);
        let hi = taus.iter().max().copied().unwrap_or(0);
        if lo == hi {
            format!("beta{}-tau{lo}", self.scenario.beta)
        } else {
            format!("beta{}-tau{lo}-{hi}", self.scenario.beta)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.n_steps != self.scenario.n_steps {
            bail!(
                "model.n_steps ({}) must match scenario.n_steps ({})",
                self.model.n_steps,
                self.scenario.n_steps
            );
        }
        Ok(())
    }

    /// Render the fully-resolved configuration in the same format the
    /// parser accepts.
    pub fn render(&self) -> String {
        let mut o = String::new();
        let s = &self.scenario;
        let _ = writeln!(o, "[scenario]");
        let _ = writeln!(o, "n_aps = {}", s.n_aps);
        let _ = writeln!(o, "n_ues = {}", s.n_ues);
        let positions: Vec<String> = s
            .ap_positions
            .iter()
            .map(|(x, y)| format!("{x},{y}"))
            .collect();
        let _ = writeln!(o, "ap_positions = {}", positions.join(" "));
        let _ = writeln!(o, "area_side = {}", s.area_side);
        let _ = writeln!(o, "beta = {}", s.beta);
        let _ = writeln!(o, "noise_power = {}", s.noise_power);
        let _ = writeln!(o, "threshold_db = {}", s.threshold_db);
        let _ = writeln!(o, "v_max_mps = {}", s.v_max);
        let _ = writeln!(o, "sigma_w = {}", s.sigma_w);
        let _ = writeln!(o, "sample_time = {}", s.sample_time);
        let _ = writeln!(o, "frame_duration = {}", s.frame_duration);
        let _ = writeln!(o, "n_steps = {}", s.n_steps);
        let _ = writeln!(o, "tau = {}", s.tau);
        let _ = writeln!(o, "jammer_power = {}", s.jammer_power);
        let _ = writeln!(o, "jammer_radius = {}", s.jammer_radius);
        let _ = writeln!(o, "seed = {}", s.seed);
        let _ = writeln!(o, "n_antennas = {}", s.n_antennas);
        let _ = writeln!(o, "d0 = {}", s.d0);
        let _ = writeln!(o, "d_min = {}", s.d_min);
        let _ = writeln!(
            o,
            "velocity_support = {}",
            match s.velocity_support {
                VelocitySupport::Signed => "signed",
                VelocitySupport::Positive => "positive",
            }
        );
        let _ = writeln!(
            o,
            "burst_offset = {}",
            match s.burst_offset {
                BurstOffset::Fixed => "fixed",
                BurstOffset::UniformRandom => "uniform-random",
            }
        );
        let _ = writeln!(o);
        let _ = writeln!(o, "[dataset]");
        let _ = writeln!(o, "n_sequences = {}", self.dataset.n_sequences);
        let taus: Vec<String> = self.dataset.tau_set.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(o, "tau_set = {}", taus.join(","));
        let _ = writeln!(o, "tag = {}", self.scenario_tag());
        let _ = writeln!(o);
        let m = &self.model;
        let _ = writeln!(o, "[model]");
        let _ = writeln!(o, "hidden_dim = {}", m.hidden_dim);
        let _ = writeln!(o, "gcn_layers = {}", m.gcn_layers);
        let _ = writeln!(o, "gcn_prop_steps = {}", m.gcn_prop_steps);
        let _ = writeln!(o, "encoder_layers = {}", m.encoder_layers);
        let _ = writeln!(o, "attention_heads = {}", m.attention_heads);
        let _ = writeln!(o, "ffn_dim = {}", m.ffn_dim);
        let _ = writeln!(o, "classifier_hidden = {}", m.classifier_hidden);
        let _ = writeln!(o, "dropout_attn = {}", m.dropout_attn);
        let _ = writeln!(o, "dropout_global = {}", m.dropout_global);
        let _ = writeln!(o, "n_steps = {}", m.n_steps);
        let _ = writeln!(o, "node_feature_dim = {}", m.node_feature_dim);
        let _ = writeln!(o, "edge_feature_dim = {}", m.edge_feature_dim);
        let _ = writeln!(o);
        let t = &self.train;
        let _ = writeln!(o, "[train]");
        let _ = writeln!(o, "epochs = {}", t.epochs);
        let _ = writeln!(o, "learning_rate = {}", t.learning_rate);
        let _ = writeln!(o, "weight_decay = {}", t.weight_decay);
        let _ = writeln!(o, "batch_size = {}", t.batch_size);
        let _ = writeln!(o, "adam_beta1 = {}", t.adam_beta1);
        let _ = writeln!(o, "adam_beta2 = {}", t.adam_beta2);
        let _ = writeln!(o, "adam_epsilon = {}", t.adam_epsilon);
        if t.early_stop_patience == usize::MAX {
            let _ = writeln!(o, "early_stop_patience = none");
        } else {
            let _ = writeln!(o, "early_stop_patience = {}", t.early_stop_patience);
        }
        let _ = writeln!(o, "seed = {}", t.seed);
        let _ = writeln!(o, "decision_threshold = {}", t.decision_threshold);
        let _ = writeln!(o);
        let _ = writeln!(o, "[run]");
        let _ = writeln!(o, "dataset_dir = {}", self.dataset_dir.display());
        let _ = writeln!(o, "checkpoint_path = {}", self.checkpoint_path.display());
        let _ = writeln!(o, "report_path = {}", self.report_path.display());
        o
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("key '{key}': cannot parse '{value}'"))
}

/// `x1,y1 x2,y2 ...`
fn parse_positions(value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split_whitespace()
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| anyhow!("ap_positions entries are 'x,y', got '{pair}'"))?;
            Ok((num("ap_positions.x", x)?, num("ap_positions.y", y)?))
        })
        .collect()
}

/// Comma-separated values and `a-b` ranges: `1,2,5-8`.
pub fn parse_tau_set(value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (num("tau_set", a.trim())?, num("tau_set", b.trim())?);
                if a > b {
                    bail!("tau_set range '{part}' is reversed");
                }
                out.extend(a..=b);
            }
            None => out.push(num("tau_set", part)?),
        }
    }
    if out.is_empty() {
        bail!("tau_set is empty");
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
