//! Layered forward pass of the detector, built on the tape.
//!
//! The batched path stacks all snapshots' node rows into one matrix so
//! the gated graph convolutions run as a handful of large matmuls per
//! propagation step instead of one small matmul per snapshot.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::data::PreparedSequence;
use super::float::Float;
use super::params::ModelParams;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::dataset::GraphSequence;
use crate::error::{Error, Result};
use crate::topology::{EdgeRecord, GraphSnapshot};

/// Dropout mode: evaluation is deterministic, training draws masks
/// from an explicit stream.
pub enum ModelRng<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl ModelRng<'_> {
    fn mask<F: Float>(&mut self, shape: &[usize], p: f64) -> Option<Tensor<F>> {
        match self {
            ModelRng::Eval => None,
            ModelRng::Train(rng) => {
                if p <= 0.0 {
                    return None;
                }
                let keep = F::from_f64(1.0 / (1.0 - p));
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < p {
                            F::ZERO
                        } else {
                            keep
                        }
                    })
                    .collect();
                Some(Tensor::from_vec(shape, data))
            }
        }
    }
}

/// Parameter tensors leafed into a tape, aligned with the params order.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn bind<F: Float>(tape: &mut Tape<F>, params: &ModelParams<F>) -> Self {
        BoundParams {
            vars: params
                .tensors()
                .iter()
                .map(|t| tape.leaf(t.clone()))
                .collect(),
        }
    }

    pub fn var<F: Float>(&self, params: &ModelParams<F>, name: &str) -> Var {
        self.vars[params.index_of(name)]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// One gated recurrence step of GCN layer `layer` over the (possibly
/// stacked) node-state matrix.
#[allow(clippy::too_many_arguments)]
pub fn gcn_step<F: Float>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    bp: &BoundParams,
    layer: usize,
    states: Var,
    edge_src: &[usize],
    edge_dst: &[usize],
    edge_features: Var,
) -> Var {
    let p = |s: &str| format!("gcn{layer}.{s}");
    let n_rows = tape.value(states).rows();
    let hidden = tape.value(states).cols();

    let message = if edge_src.is_empty() {
        tape.leaf(Tensor::zeros(&[n_rows, hidden]))
    } else {
        let src_states = tape.gather_rows(states, edge_src);
        let from_nodes = tape.matmul(src_states, bp.var(params, &p("w_msg")));
        let from_edges = tape.matmul(edge_features, bp.var(params, &p("w_edge")));
        let per_edge = tape.add(from_nodes, from_edges);
        tape.scatter_add_rows(per_edge, edge_dst, n_rows)
    };

    let gate = |tape: &mut Tape<F>, w: &str, u: &str, b: &str, other: Var| {
        let wm = tape.matmul(message, bp.var(params, &p(w)));
        let uh = tape.matmul(other, bp.var(params, &p(u)));
        let s = tape.add(wm, uh);
        tape.add_row(s, bp.var(params, &p(b)))
    };

    let z_pre = gate(tape, "w_z", "u_z", "b_z", states);
    let update = tape.sigmoid(z_pre);
    let r_pre = gate(tape, "w_r", "u_r", "b_r", states);
    let reset = tape.sigmoid(r_pre);
    let gated_states = tape.hadamard(reset, states);
    let c_pre = gate(tape, "w_c", "u_c", "b_c", gated_states);
    let candidate = tape.tanh(c_pre);

    let keep = tape.one_minus(update);
    let kept = tape.hadamard(keep, states);
    let new = tape.hadamard(update, candidate);
    tape.add(kept, new)
}

/// Input projection plus every GCN layer's recurrence; returns the
/// final node-state matrix.
pub fn gcn_encode<F: Float>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    bp: &BoundParams,
    prep: &PreparedSequence<F>,
) -> Var {
    let cfg = &params.config;
    let features = tape.leaf(prep.features.clone());
    let projected = tape.matmul(features, bp.var(params, "input.w"));
    let mut states = tape.add_row(projected, bp.var(params, "input.b"));
    let edge_features = tape.leaf(prep.edge_features.clone());
    for layer in 0..cfg.gcn_layers {
        for _ in 0..cfg.gcn_prop_steps {
            states = gcn_step(
                tape,
                params,
                bp,
                layer,
                states,
                &prep.edge_src,
                &prep.edge_dst,
                edge_features,
            );
        }
    }
    states
}

/// Self-attention encoder over the per-step tokens; returns the
/// transformed [n_steps x hidden] matrix.
pub fn encoder<F: Float>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    bp: &BoundParams,
    tokens: Var,
    mode: &mut ModelRng,
) -> Var {
    let cfg = &params.config;
    let heads = cfg.attention_heads;
    let head_dim = cfg.hidden_dim / heads;
    let scale = F::from_f64(1.0 / (head_dim as f64).sqrt());
    let s_rows = tape.value(tokens).rows();

    let mut x = {
        let pos = bp.var(params, "pos");
        tape.add(tokens, pos)
    };

    for layer in 0..cfg.encoder_layers {
        let p = |s: &str| format!("enc{layer}.{s}");
        let proj = |tape: &mut Tape<F>, x: Var, w: &str, b: &str| {
            let m = tape.matmul(x, bp.var(params, &p(w)));
            tape.add_row(m, bp.var(params, &p(b)))
        };
        let q = proj(tape, x, "w_q", "b_q");
        let k = proj(tape, x, "w_k", "b_k");
        let v = proj(tape, x, "w_v", "b_v");

        let mut head_outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let start = h * head_dim;
            let qh = tape.slice_cols(q, start, head_dim);
            let kh = tape.slice_cols(k, start, head_dim);
            let vh = tape.slice_cols(v, start, head_dim);
            let scores = tape.matmul_nt(qh, kh);
            let scaled = tape.scale(scores, scale);
            let mut attn = tape.softmax_rows(scaled);
            if let Some(mask) = mode.mask(&[s_rows, s_rows], cfg.dropout_attn) {
                attn = tape.dropout(attn, mask);
            }
            head_outputs.push(tape.matmul(attn, vh));
        }
        let concat = tape.concat_cols(&head_outputs);
        let mut attended = proj(tape, concat, "w_o", "b_o");
        if let Some(mask) = mode.mask(&[s_rows, cfg.hidden_dim], cfg.dropout_attn) {
            attended = tape.dropout(attended, mask);
        }
        let residual = tape.add(x, attended);
        x = tape.layer_norm_rows(
            residual,
            bp.var(params, &p("ln1_g")),
            bp.var(params, &p("ln1_b")),
        );

        let f_pre = proj(tape, x, "ffn_w1", "ffn_b1");
        let f_act = tape.gelu(f_pre);
        let mut f_out = proj(tape, f_act, "ffn_w2", "ffn_b2");
        if let Some(mask) = mode.mask(&[s_rows, cfg.hidden_dim], cfg.dropout_attn) {
            f_out = tape.dropout(f_out, mask);
        }
        let residual2 = tape.add(x, f_out);
        x = tape.layer_norm_rows(
            residual2,
            bp.var(params, &p("ln2_g")),
            bp.var(params, &p("ln2_b")),
        );
    }
    x
}

/// Classification head: project to the 32-wide intermediate, layer
/// norm, GELU, then the final two-class projection and softmax.
pub fn head<F: Float>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    bp: &BoundParams,
    t_o: Var,
) -> Var {
    let l1 = tape.matmul(t_o, bp.var(params, "cls.w1"));
    let l1 = tape.add_row(l1, bp.var(params, "cls.b1"));
    let normed = tape.layer_norm_rows(l1, bp.var(params, "cls.ln_g"), bp.var(params, "cls.ln_b"));
    let act = tape.gelu(normed);
    let logits = tape.matmul(act, bp.var(params, "cls.w2"));
    let logits = tape.add_row(logits, bp.var(params, "cls.b2"));
    tape.softmax_rows(logits)
}

/// Full forward pass on an existing tape; returns the probability row.
pub fn forward_on_tape<F: Float>(
    tape: &mut Tape<F>,
    params: &ModelParams<F>,
    bp: &BoundParams,
    prep: &PreparedSequence<F>,
    mode: &mut ModelRng,
) -> Result<Var> {
    let cfg = &params.config;
    if prep.features.cols() != cfg.node_feature_dim {
        return Err(Error::DimensionMismatch(format!(
            "{} node features, model expects {}",
            prep.features.cols(),
            cfg.node_feature_dim
        )));
    }
    if prep.edge_features.rows() > 0 && prep.edge_features.cols() != cfg.edge_feature_dim {
        return Err(Error::DimensionMismatch(format!(
            "{} edge features, model expects {}",
            prep.edge_features.cols(),
            cfg.edge_feature_dim
        )));
    }
    if prep.n_steps != cfg.n_steps {
        return Err(Error::DimensionMismatch(format!(
            "sequence has {} steps, model expects {}",
            prep.n_steps, cfg.n_steps
        )));
    }
    let states = gcn_encode(tape, params, bp, prep);
    let mut tokens = tape.segment_mean_rows(states, prep.n_nodes);
    if let Some(mask) = mode.mask(&[prep.n_steps, cfg.hidden_dim], cfg.dropout_global) {
        tokens = tape.dropout(tokens, mask);
    }
    let encoded = encoder(tape, params, bp, tokens, mode);
    let t_o = tape.mean_rows(encoded);
    Ok(head(tape, params, bp, t_o))
}

/// Classify one sequence; ground-truth fields are never read.
pub fn forward<F: Float>(
    seq: &GraphSequence,
    params: &ModelParams<F>,
    mode: &mut ModelRng,
) -> Result<[f64; 2]> {
    let prep = PreparedSequence::from_sequence(seq)?;
    forward_prepared(&prep, params, mode)
}

/// Classify one prepared sequence.
pub fn forward_prepared<F: Float>(
    prep: &PreparedSequence<F>,
    params: &ModelParams<F>,
    mode: &mut ModelRng,
) -> Result<[f64; 2]> {
    let mut tape = Tape::new();
    let bp = BoundParams::bind(&mut tape, params);
    let probs = forward_on_tape(&mut tape, params, &bp, prep, mode)?;
    let row = tape.value(probs);
    Ok([row.data()[0].to_f64(), row.data()[1].to_f64()])
}

/// Cross-entropy loss and the gradient of every parameter tensor for
/// one sequence, in params order.
pub fn loss_and_grads<F: Float>(
    prep: &PreparedSequence<F>,
    params: &ModelParams<F>,
    mode: &mut ModelRng,
) -> Result<(f64, Vec<Tensor<F>>)> {
    let mut tape = Tape::new();
    let bp = BoundParams::bind(&mut tape, params);
    let probs = forward_on_tape(&mut tape, params, &bp, prep, mode)?;
    let loss = tape.neg_log_index(probs, prep.label as usize);
    let loss_value = tape.value(loss).data()[0].to_f64();
    let mut grads = tape.backward(loss);
    let out = bp
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((loss_value, out))
}

// ---------------------------------------------------------------------------
// Per-snapshot operations
// ---------------------------------------------------------------------------

/// Apply GCN layer `layer`'s gated recurrence (all propagation steps)
/// to explicit node states over the given edges.
pub fn gated_graph_conv<F: Float>(
    node_states: &Tensor<F>,
    edges: &[EdgeRecord],
    params: &ModelParams<F>,
    layer: usize,
) -> Result<Tensor<F>> {
    let cfg = &params.config;
    if layer >= cfg.gcn_layers {
        return Err(Error::Config(format!(
            "layer {layer} out of {} GCN layers",
            cfg.gcn_layers
        )));
    }
    if node_states.cols() != cfg.hidden_dim {
        return Err(Error::DimensionMismatch(format!(
            "node states are {} wide, hidden_dim is {}",
            node_states.cols(),
            cfg.hidden_dim
        )));
    }
    let n = node_states.rows();
    let mut edge_src = Vec::with_capacity(edges.len() * 2);
    let mut edge_dst = Vec::with_capacity(edges.len() * 2);
    let mut edge_feat = Vec::with_capacity(edges.len() * 4);
    for e in edges {
        if e.ap_id >= n || e.ue_id >= n {
            return Err(Error::UnknownNode(e.ap_id.max(e.ue_id)));
        }
        let w = [F::from_f64(e.weight.0), F::from_f64(e.weight.1)];
        edge_src.push(e.ap_id);
        edge_dst.push(e.ue_id);
        edge_feat.extend_from_slice(&w);
        edge_src.push(e.ue_id);
        edge_dst.push(e.ap_id);
        edge_feat.extend_from_slice(&w);
    }
    let mut tape = Tape::new();
    let bp = BoundParams::bind(&mut tape, params);
    let edge_features = tape.leaf(Tensor::from_vec(&[edge_src.len(), 2], edge_feat));
    let mut states = tape.leaf(node_states.clone());
    for _ in 0..cfg.gcn_prop_steps {
        states = gcn_step(
            &mut tape,
            params,
            &bp,
            layer,
            states,
            &edge_src,
            &edge_dst,
            edge_features,
        );
    }
    Ok(tape.value(states).clone())
}

/// Embed one snapshot: input projection, all GCN layers, mean pool
/// over the nodes. Returns a [1 x hidden_dim] tensor.
pub fn snapshot_embedding<F: Float>(
    snapshot: &GraphSnapshot,
    area_side: f64,
    params: &ModelParams<F>,
) -> Result<Tensor<F>> {
    let n_aps = snapshot.n_aps();
    if n_aps == 0 {
        return Err(Error::Config("snapshot has no AP nodes".into()));
    }
    let prep: PreparedSequence<F> = PreparedSequence::from_snapshot(snapshot, n_aps, area_side);
    let mut tape = Tape::new();
    let bp = BoundParams::bind(&mut tape, params);
    let states = gcn_encode(&mut tape, params, &bp, &prep);
    let pooled = tape.segment_mean_rows(states, prep.n_nodes);
    Ok(tape.value(pooled).clone())
}

/// Run the temporal encoder over per-step embeddings and mean-pool the
/// outputs into the sequence representation T_o ([1 x hidden_dim]).
pub fn temporal_encode<F: Float>(
    embeddings: &Tensor<F>,
    params: &ModelParams<F>,
    mode: &mut ModelRng,
) -> Result<Tensor<F>> {
    let cfg = &params.config;
    if embeddings.rows() != cfg.n_steps || embeddings.cols() != cfg.hidden_dim {
        return Err(Error::DimensionMismatch(format!(
            "embeddings are {}x{}, encoder expects {}x{}",
            embeddings.rows(),
            embeddings.cols(),
            cfg.n_steps,
            cfg.hidden_dim
        )));
    }
    let mut tape = Tape::new();
    let bp = BoundParams::bind(&mut tape, params);
    let tokens = tape.leaf(embeddings.clone());
    let encoded = encoder(&mut tape, params, &bp, tokens, mode);
    let t_o = tape.mean_rows(encoded);
    Ok(tape.value(t_o).clone())
}

/// Classification head on a sequence representation.
pub fn classify<F: Float>(t_o: &Tensor<F>, params: &ModelParams<F>) -> Result<[f64; 2]> {
    if t_o.rows() != 1 || t_o.cols() != params.config.hidden_dim {
        return Err(Error::DimensionMismatch(format!(
            "T_o is {}x{}, expected 1x{}",
            t_o.rows(),
            t_o.cols(),
            params.config.hidden_dim
        )));
    }
    let mut tape = Tape::new();
    let bp = BoundParams::bind(&mut tape, params);
    let v = tape.leaf(t_o.clone());
    let probs = head(&mut tape, params, &bp, v);
    let row = tape.value(probs);
    Ok([row.data()[0].to_f64(), row.data()[1].to_f64()])
}

/// Cross-entropy against a binary label, with the probability clamped
/// at 1e-12.
pub fn cross_entropy(probabilities: &[f64; 2], label: bool) -> f64 {
    -probabilities[label as usize].max(1e-12).ln()
}
