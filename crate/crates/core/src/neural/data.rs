//! Conversion from graph snapshots to model inputs.
//!
//! Features deliberately exclude every ground-truth field: node rows
//! carry [degree / n_aps, node_type, x / L, y / L] and edge rows carry
//! the normalized (distance, SINR) weights already stored on the edge.

use super::float::Float;
use super::tensor::Tensor;
use crate::dataset::GraphSequence;
use crate::error::{Error, Result};
use crate::topology::{GraphSnapshot, NodeType};

/// Node-feature matrix of one snapshot: [n_nodes x 4].
pub fn node_features<F: Float>(
    snapshot: &GraphSnapshot,
    n_aps: usize,
    area_side: f64,
) -> Tensor<F> {
    let n = snapshot.nodes.len();
    let mut data = Vec::with_capacity(n * 4);
    for node in &snapshot.nodes {
        data.push(F::from_f64(node.degree as f64 / n_aps as f64));
        data.push(F::from_f64(match node.node_type {
            NodeType::Ap => 0.0,
            NodeType::Ue => 1.0,
        }));
        data.push(F::from_f64(node.position.0 / area_side));
        data.push(F::from_f64(node.position.1 / area_side));
    }
    Tensor::from_vec(&[n, 4], data)
}

/// A sequence flattened for the batched forward pass: node rows of all
/// snapshots stacked snapshot-major, undirected edge endpoints as
/// global row indices, and edge features duplicated per direction.
#[derive(Debug, Clone)]
pub struct PreparedSequence<F: Float> {
    pub n_steps: usize,
    /// Nodes per snapshot.
    pub n_nodes: usize,
    /// [(n_steps * n_nodes) x node_feature_dim]
    pub features: Tensor<F>,
    /// Message sources; one entry per directed edge copy.
    pub edge_src: Vec<usize>,
    /// Message destinations, aligned with `edge_src`.
    pub edge_dst: Vec<usize>,
    /// [len(edge_src) x edge_feature_dim]
    pub edge_features: Tensor<F>,
    pub label: bool,
    pub tau: usize,
}

impl<F: Float> PreparedSequence<F> {
    pub fn from_sequence(seq: &GraphSequence) -> Result<Self> {
        if seq.snapshots.is_empty() {
            return Err(Error::Config("sequence has no snapshots".into()));
        }
        let n_aps = seq.n_aps();
        if n_aps == 0 {
            return Err(Error::Config("sequence has no AP nodes".into()));
        }
        let n_nodes = seq.snapshots[0].nodes.len();
        let n_steps = seq.snapshots.len();
        let feat_dim = 4;

        let mut features = Vec::with_capacity(n_steps * n_nodes * feat_dim);
        let mut edge_src = Vec::new();
        let mut edge_dst = Vec::new();
        let mut edge_features = Vec::new();
        for (s, snap) in seq.snapshots.iter().enumerate() {
            if snap.nodes.len() != n_nodes {
                return Err(Error::DimensionMismatch(format!(
                    "snapshot {s} has {} nodes, expected {n_nodes}",
                    snap.nodes.len()
                )));
            }
            let nf: Tensor<F> = node_features(snap, n_aps, seq.area_side);
            features.extend_from_slice(nf.data());
            let base = s * n_nodes;
            for e in &snap.edges {
                let (a, u) = (base + e.ap_id, base + e.ue_id);
                let w = [F::from_f64(e.weight.0), F::from_f64(e.weight.1)];
                // Messages flow both ways across the undirected link.
                edge_src.push(a);
                edge_dst.push(u);
                edge_features.extend_from_slice(&w);
                edge_src.push(u);
                edge_dst.push(a);
                edge_features.extend_from_slice(&w);
            }
        }

        let n_dir_edges = edge_src.len();
        Ok(PreparedSequence {
            n_steps,
            n_nodes,
            features: Tensor::from_vec(&[n_steps * n_nodes, feat_dim], features),
            edge_src,
            edge_dst,
            edge_features: Tensor::from_vec(&[n_dir_edges, 2], edge_features),
            label: seq.label,
            tau: seq.tau,
        })
    }

    /// Wrap a single snapshot (used by the per-snapshot operations).
    pub fn from_snapshot(snap: &GraphSnapshot, n_aps: usize, area_side: f64) -> Self {
        let n_nodes = snap.nodes.len();
        let features: Tensor<F> = node_features(snap, n_aps, area_side);
        let mut edge_src = Vec::new();
        let mut edge_dst = Vec::new();
        let mut edge_features = Vec::new();
        for e in &snap.edges {
            let w = [F::from_f64(e.weight.0), F::from_f64(e.weight.1)];
            edge_src.push(e.ap_id);
            edge_dst.push(e.ue_id);
            edge_features.extend_from_slice(&w);
            edge_src.push(e.ue_id);
            edge_dst.push(e.ap_id);
            edge_features.extend_from_slice(&w);
        }
        let n_dir = edge_src.len();
        PreparedSequence {
            n_steps: 1,
            n_nodes,
            features,
            edge_src,
            edge_dst,
            edge_features: Tensor::from_vec(&[n_dir, 2], edge_features),
            label: false,
            tau: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_sequence, ScenarioConfig};
    use crate::rng::SequenceRng;
    use crate::topology::NodeRecord;

    #[test]
    fn features_follow_the_documented_normalization() {
        let snap = GraphSnapshot {
            time_index: 0,
            nodes: vec![
                NodeRecord {
                    id: 0,
                    node_type: NodeType::Ap,
                    position: (0.0, 0.0),
                    degree: 0,
                },
                NodeRecord {
                    id: 1,
                    node_type: NodeType::Ue,
                    position: (1000.0, 1000.0),
                    degree: 1,
                },
            ],
            edges: vec![],
            jammer_active: false,
        };
        let f: Tensor<f64> = node_features(&snap, 5, 1000.0);
        assert_eq!(f.row(0), &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.row(1), &[0.2, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn prepared_sequence_shapes_line_up() {
        let cfg = ScenarioConfig {
            n_steps: 20,
            ..ScenarioConfig::default()
        };
        let mut rng = SequenceRng::for_sequence(3, 0);
        let seq = generate_sequence(&cfg, true, &mut rng).unwrap();
        let prep: PreparedSequence<f32> = PreparedSequence::from_sequence(&seq).unwrap();
        assert_eq!(prep.n_steps, 20);
        assert_eq!(prep.n_nodes, 15);
        assert_eq!(prep.features.rows(), 300);
        assert_eq!(prep.features.cols(), 4);
        let total_edges: usize = seq.snapshots.iter().map(|s| s.edges.len()).sum();
        assert_eq!(prep.edge_src.len(), 2 * total_edges);
        assert_eq!(prep.edge_features.rows(), 2 * total_edges);
        // Every endpoint index stays inside its snapshot's node block.
        for (k, (&s, &d)) in prep.edge_src.iter().zip(&prep.edge_dst).enumerate() {
            assert_eq!(s / 15, d / 15, "directed edge {k} crosses snapshots");
        }
    }
}
