//! The detector: gated graph convolutions over each snapshot, mean
//! pooling into per-step tokens, learned positional encodings, a
//! multi-head self-attention encoder over time, and a two-class head.
//!
//! Forward passes run on the reverse-mode [`tape::Tape`], so every
//! operation has exact gradients; [`model`] exposes the layer-level
//! entry points and the end-to-end sequence classifier.

pub mod data;
pub mod float;
pub mod model;
pub mod params;
pub mod tape;
pub mod tensor;

pub use data::{node_features, PreparedSequence};
pub use float::Float;
pub use model::{
    classify, cross_entropy, forward, gated_graph_conv, snapshot_embedding, temporal_encode,
    BoundParams, ModelRng,
};
pub use params::{
    load_checkpoint, param_count, param_layout, save_checkpoint, Checkpoint, ModelParams,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    /// Gated recurrence steps per graph-conv layer.
    pub gcn_prop_steps: usize,
    pub encoder_layers: usize,
    pub attention_heads: usize,
    pub ffn_dim: usize,
    pub classifier_hidden: usize,
    /// Dropout inside the attention encoder.
    pub dropout_attn: f64,
    /// Dropout on snapshot embeddings before the encoder.
    pub dropout_global: f64,
    /// Sequence length the encoder (and positional table) is built for.
    pub n_steps: usize,
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 64,
            gcn_layers: 2,
            gcn_prop_steps: 2,
            encoder_layers: 4,
            attention_heads: 16,
            ffn_dim: 128,
            classifier_hidden: 32,
            dropout_attn: 0.03,
            dropout_global: 0.05,
            n_steps: 80,
            node_feature_dim: 4,
            edge_feature_dim: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("hidden_dim", self.hidden_dim),
            ("gcn_layers", self.gcn_layers),
            ("gcn_prop_steps", self.gcn_prop_steps),
            ("encoder_layers", self.encoder_layers),
            ("attention_heads", self.attention_heads),
            ("ffn_dim", self.ffn_dim),
            ("classifier_hidden", self.classifier_hidden),
            ("n_steps", self.n_steps),
            ("node_feature_dim", self.node_feature_dim),
            ("edge_feature_dim", self.edge_feature_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.hidden_dim % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} not divisible by attention_heads {}",
                self.hidden_dim, self.attention_heads
            )));
        }
        for (name, v) in [
            ("dropout_attn", self.dropout_attn),
            ("dropout_global", self.dropout_global),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0,1), got {v}")));
            }
        }
        Ok(())
    }
}
