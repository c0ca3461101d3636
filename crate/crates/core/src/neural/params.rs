//! Named parameter tensors, their initialization, and the checkpoint
//! container format `cfjam-ckpt-v1`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::Rng;

use super::float::Float;
use super::tensor::Tensor;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::stream;

pub const CHECKPOINT_SCHEMA: &str = "cfjam-ckpt-v1";

/// All learnable tensors of the detector, in a fixed order shared by
/// initialization, gradient extraction, Adam state and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F: Float> {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    by_name: HashMap<String, usize>,
}

/// (name, rows, cols) layout of every parameter tensor for a config.
pub fn param_layout(config: &ModelConfig) -> Vec<(String, usize, usize)> {
    let h = config.hidden_dim;
    let mut out = Vec::new();
    out.push(("input.w".to_string(), config.node_feature_dim, h));
    out.push(("input.b".to_string(), 1, h));
    for l in 0..config.gcn_layers {
        let p = |s: &str| format!("gcn{l}.{s}");
        out.push((p("w_msg"), h, h));
        out.push((p("w_edge"), config.edge_feature_dim, h));
        for gate in ["z", "r", "c"] {
            out.push((p(&format!("w_{gate}")), h, h));
            out.push((p(&format!("u_{gate}")), h, h));
            out.push((p(&format!("b_{gate}")), 1, h));
        }
    }
    out.push(("pos".to_string(), config.n_steps, h));
    for l in 0..config.encoder_layers {
        let p = |s: &str| format!("enc{l}.{s}");
        for m in ["q", "k", "v", "o"] {
            out.push((p(&format!("w_{m}")), h, h));
            out.push((p(&format!("b_{m}")), 1, h));
        }
        out.push((p("ffn_w1"), h, config.ffn_dim));
        out.push((p("ffn_b1"), 1, config.ffn_dim));
        out.push((p("ffn_w2"), config.ffn_dim, h));
        out.push((p("ffn_b2"), 1, h));
        out.push((p("ln1_g"), 1, h));
        out.push((p("ln1_b"), 1, h));
        out.push((p("ln2_g"), 1, h));
        out.push((p("ln2_b"), 1, h));
    }
    out.push(("cls.w1".to_string(), h, config.classifier_hidden));
    out.push(("cls.b1".to_string(), 1, config.classifier_hidden));
    out.push(("cls.ln_g".to_string(), 1, config.classifier_hidden));
    out.push(("cls.ln_b".to_string(), 1, config.classifier_hidden));
    out.push(("cls.w2".to_string(), config.classifier_hidden, 2));
    out.push(("cls.b2".to_string(), 1, 2));
    out
}

/// Closed-form learnable-scalar count for a config.
pub fn param_count(config: &ModelConfig) -> usize {
    param_layout(config).iter().map(|(_, r, c)| r * c).sum()
}

impl<F: Float> ModelParams<F> {
    /// Glorot-uniform matrices, zero biases and positional table, unit
    /// layer-norm gains. Weight matrices draw from the seeded stream in
    /// layout order.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, 0);
        let layout = param_layout(config);
        let mut names = Vec::with_capacity(layout.len());
        let mut tensors = Vec::with_capacity(layout.len());
        for (name, r, c) in layout {
            let t = if name.ends_with("ln_g") || name.contains("ln1_g") || name.contains("ln2_g") {
                Tensor::from_vec(&[r, c], vec![F::ONE; r * c])
            } else if r == 1 || name == "pos" {
                // Biases and the positional table start at zero.
                Tensor::zeros(&[r, c])
            } else {
                let bound = (6.0 / (r + c) as f64).sqrt();
                let data = (0..r * c)
                    .map(|_| F::from_f64(rng.random_range(-bound..=bound)))
                    .collect();
                Tensor::from_vec(&[r, c], data)
            };
            names.push(name);
            tensors.push(t);
        }
        let by_name = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
            by_name,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> &Tensor<F> {
        &self.tensors[self.by_name[name]]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<F> {
        let i = self.by_name[name];
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> usize {
        self.by_name[name]
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Convert the numeric width (used to run f64 gradient checks on
    /// f32-trained weights and vice versa).
    pub fn cast<G: Float>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::from_f64_slice(t.shape(), &t.to_f64_vec()))
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Write a checkpoint: schema line, dtype, the dataset digest it was
/// trained against, the full model config, then one block per tensor.
pub fn save_checkpoint<F: Float>(
    params: &ModelParams<F>,
    dataset_digest: &str,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_SCHEMA}");
    let _ = writeln!(out, "dtype {}", F::DTYPE);
    let digest = if dataset_digest.is_empty() {
        "-"
    } else {
        dataset_digest
    };
    let _ = writeln!(out, "config_digest {digest}");
    let c = &params.config;
    let _ = writeln!(out, "model hidden_dim {}", c.hidden_dim);
    let _ = writeln!(out, "model gcn_layers {}", c.gcn_layers);
    let _ = writeln!(out, "model gcn_prop_steps {}", c.gcn_prop_steps);
    let _ = writeln!(out, "model encoder_layers {}", c.encoder_layers);
    let _ = writeln!(out, "model attention_heads {}", c.attention_heads);
    let _ = writeln!(out, "model ffn_dim {}", c.ffn_dim);
    let _ = writeln!(out, "model classifier_hidden {}", c.classifier_hidden);
    let _ = writeln!(out, "model dropout_attn {}", c.dropout_attn);
    let _ = writeln!(out, "model dropout_global {}", c.dropout_global);
    let _ = writeln!(out, "model n_steps {}", c.n_steps);
    let _ = writeln!(out, "model node_feature_dim {}", c.node_feature_dim);
    let _ = writeln!(out, "model edge_feature_dim {}", c.edge_feature_dim);
    for (name, tensor) in params.names.iter().zip(&params.tensors) {
        let _ = writeln!(out, "tensor {name} {} {}", tensor.rows(), tensor.cols());
        for i in 0..tensor.rows() {
            let mut line = String::new();
            for (j, v) in tensor.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{v}");
            }
            let _ = writeln!(out, "{line}");
        }
    }
    let _ = writeln!(out, "end");
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Checkpoint contents before choosing a numeric width.
pub struct Checkpoint {
    pub dtype: String,
    pub dataset_digest: String,
    pub config: ModelConfig,
    tensors: Vec<(String, Tensor<f64>)>,
}

impl Checkpoint {
    /// Materialize parameters at width F; shapes were already checked
    /// against the config on load.
    pub fn into_params<F: Float>(self) -> ModelParams<F> {
        let names: Vec<String> = self.tensors.iter().map(|(n, _)| n.clone()).collect();
        let tensors = self
            .tensors
            .into_iter()
            .map(|(_, t)| Tensor::from_f64_slice(t.shape(), &t.to_f64_vec()))
            .collect();
        let by_name = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        ModelParams {
            config: self.config,
            names,
            tensors,
            by_name,
        }
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let mut lineno = 0usize;
    let mut next = |expect: &str| -> Result<String> {
        lineno += 1;
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(e.into()),
            None => Err(Error::schema(path, expect, "file truncated")),
        }
    };

    let header = next("schema")?;
    if header != CHECKPOINT_SCHEMA {
        return Err(Error::schema(
            path,
            "schema",
            format!("expected {CHECKPOINT_SCHEMA}, found '{header}'"),
        ));
    }
    let dtype_line = next("dtype")?;
    let dtype = dtype_line
        .strip_prefix("dtype ")
        .ok_or_else(|| Error::schema(path, "dtype", "malformed line"))?
        .to_string();
    if dtype != "f32" && dtype != "f64" {
        return Err(Error::schema(
            path,
            "dtype",
            format!("unknown dtype '{dtype}'"),
        ));
    }
    let digest_line = next("config_digest")?;
    let dataset_digest = digest_line
        .strip_prefix("config_digest ")
        .ok_or_else(|| Error::schema(path, "config_digest", "malformed line"))?
        .to_string();

    let mut fields: HashMap<String, String> = HashMap::new();
    let mut pending: Option<String> = None;
    for _ in 0..12 {
        let line = next("model")?;
        match line.strip_prefix("model ") {
            Some(rest) => {
                let mut it = rest.split_whitespace();
                let (k, v) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
                fields.insert(k.to_string(), v.to_string());
            }
            None => {
                pending = Some(line);
                break;
            }
        }
    }

    let geti = |k: &str| -> Result<usize> {
        fields
            .get(k)
            .ok_or_else(|| Error::schema(path, k, "missing model field"))?
            .parse()
            .map_err(|_| Error::schema(path, k, "not an integer"))
    };
    let getf = |k: &str| -> Result<f64> {
        fields
            .get(k)
            .ok_or_else(|| Error::schema(path, k, "missing model field"))?
            .parse()
            .map_err(|_| Error::schema(path, k, "not a number"))
    };
    let config = ModelConfig {
        hidden_dim: geti("hidden_dim")?,
        gcn_layers: geti("gcn_layers")?,
        gcn_prop_steps: geti("gcn_prop_steps")?,
        encoder_layers: geti("encoder_layers")?,
        attention_heads: geti("attention_heads")?,
        ffn_dim: geti("ffn_dim")?,
        classifier_hidden: geti("classifier_hidden")?,
        dropout_attn: getf("dropout_attn")?,
        dropout_global: getf("dropout_global")?,
        n_steps: geti("n_steps")?,
        node_feature_dim: geti("node_feature_dim")?,
        edge_feature_dim: geti("edge_feature_dim")?,
    };
    config.validate()?;

    let layout = param_layout(&config);
    let mut tensors: Vec<(String, Tensor<f64>)> = Vec::with_capacity(layout.len());
    for (i, (name, rows, cols)) in layout.iter().enumerate() {
        let head = if i == 0 {
            match pending.take() {
                Some(l) => l,
                None => next("tensor")?,
            }
        } else {
            next("tensor")?
        };
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(Error::schema(
                path,
                "tensor",
                format!("malformed header '{head}'"),
            ));
        }
        if parts[1] != name {
            return Err(Error::schema(
                path,
                "tensor",
                format!("expected tensor '{name}', found '{}'", parts[1]),
            ));
        }
        let (r, c): (usize, usize) = (
            parts[2]
                .parse()
                .map_err(|_| Error::schema(path, "tensor", "bad row count"))?,
            parts[3]
                .parse()
                .map_err(|_| Error::schema(path, "tensor", "bad column count"))?,
        );
        if r != *rows || c != *cols {
            return Err(Error::schema(
                path,
                "tensor",
                format!("tensor '{name}' is {r}x{c}, config requires {rows}x{cols}"),
            ));
        }
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let line = next(name)?;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::schema(path, name, format!("bad value '{tok}'")))?;
                data.push(v);
            }
        }
        if data.len() != r * c {
            return Err(Error::schema(
                path,
                name,
                format!("expected {} values, found {}", r * c, data.len()),
            ));
        }
        tensors.push((name.clone(), Tensor::from_vec(&[r, c], data)));
    }
    let endline = next("end")?;
    if endline != "end" {
        return Err(Error::schema(path, "end", "trailing data after tensors"));
    }

    Ok(Checkpoint {
        dtype,
        dataset_digest,
        config,
        tensors,
    })
}
