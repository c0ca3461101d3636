//! AP-UE assignment and per-step connection-graph construction.
//!
//! Node ids are stable across a sequence: APs take 0..n_aps, UEs take
//! n_aps..n_aps+n_ues. An edge appears between an assigned pair only
//! when its SINR clears the connection threshold, so surplus UEs and
//! silenced links show up as isolated nodes.

use crate::channel::{sinr_jammed, ChannelParams, ChannelVector};
use crate::error::{Error, Result};
use crate::mobility::UeState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeType {
    Ap = 0,
    Ue = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub node_type: NodeType,
    pub position: (f64, f64),
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    /// AP node id (0..n_aps).
    pub ap_id: usize,
    /// UE node id (n_aps..n_aps+n_ues).
    pub ue_id: usize,
    /// AP-UE distance, meters.
    pub distance: f64,
    /// Link SINR in dB; always strictly above the threshold.
    pub sinr_db: f64,
    /// Normalized (distance, SINR) feature pair, both in [0, 1].
    pub weight: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    pub time_index: usize,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    /// Ground-truth flag; never fed to the model.
    pub jammer_active: bool,
}

impl GraphSnapshot {
    pub fn n_aps(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.node_type == NodeType::Ap)
            .count()
    }
}

/// Greedy minimum-distance matching between APs and UEs.
///
/// Pairs are list indices: `(ap_index, ue_index)` into the position
/// slices handed to [`assign_users`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssignmentMap {
    pub pairs: Vec<(usize, usize)>,
}

impl AssignmentMap {
    pub fn serving_ap_of(&self, ue_index: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|&&(_, u)| u == ue_index)
            .map(|&(a, _)| a)
    }
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Iteratively pair the globally closest unassigned (AP, UE) couple
/// until one side runs out. Ties break on the lower (ap, ue) indices.
pub fn assign_users(ap_positions: &[(f64, f64)], ue_positions: &[(f64, f64)]) -> AssignmentMap {
    let mut free_aps: Vec<usize> = (0..ap_positions.len()).collect();
    let mut free_ues: Vec<usize> = (0..ue_positions.len()).collect();
    let mut pairs = Vec::with_capacity(free_aps.len().min(free_ues.len()));
    while !free_aps.is_empty() && !free_ues.is_empty() {
        let mut best: Option<(f64, usize, usize)> = None;
        for &a in &free_aps {
            for &u in &free_ues {
                let d = euclid(ap_positions[a], ue_positions[u]);
                let better = match best {
                    None => true,
                    Some((bd, ba, bu)) => d < bd || (d == bd && (a, u) < (ba, bu)),
                };
                if better {
                    best = Some((d, a, u));
                }
            }
        }
        let (_, a, u) = best.expect("nonempty free lists");
        pairs.push((a, u));
        free_aps.retain(|&x| x != a);
        free_ues.retain(|&x| x != u);
    }
    AssignmentMap { pairs }
}

/// Jammer placement and activity at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JammerState {
    pub position: (f64, f64),
    pub active: bool,
}

/// Full simulation state at one time step, as seen by the graph builder.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub time_index: usize,
    pub ap_positions: Vec<(f64, f64)>,
    pub ues: Vec<UeState>,
    pub assignment: AssignmentMap,
    pub jammer: Option<JammerState>,
}

/// Channel realizations for every (UE, AP) pair at one step, UE-major.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    vectors: Vec<ChannelVector>,
    n_aps: usize,
}

impl ChannelSet {
    pub fn new(vectors: Vec<ChannelVector>, n_aps: usize) -> Result<Self> {
        if n_aps == 0 || vectors.len() % n_aps != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} channel vectors do not tile {} APs",
                vectors.len(),
                n_aps
            )));
        }
        Ok(ChannelSet { vectors, n_aps })
    }

    pub fn get(&self, ue_index: usize, ap_index: usize) -> &ChannelVector {
        &self.vectors[ue_index * self.n_aps + ap_index]
    }

    pub fn n_ues(&self) -> usize {
        self.vectors.len() / self.n_aps
    }
}

/// Feature scaling applied to edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConstants {
    /// Multiplier for distances; 1/(L*sqrt(2)) maps the box diagonal to 1.
    pub distance_scale: f64,
    /// SINR values are clamped to [0, cap] dB then divided by the cap.
    pub sinr_cap_db: f64,
}

impl NormalizationConstants {
    pub fn for_area(area_side: f64) -> Self {
        NormalizationConstants {
            distance_scale: 1.0 / (area_side * std::f64::consts::SQRT_2),
            sinr_cap_db: 40.0,
        }
    }

    pub fn normalize_distance(&self, meters: f64) -> f64 {
        meters * self.distance_scale
    }

    pub fn normalize_sinr_db(&self, sinr_db: f64) -> f64 {
        sinr_db.clamp(0.0, self.sinr_cap_db) / self.sinr_cap_db
    }
}

/// Build the connection graph for one time step.
///
/// `jammer_power_per_ue` holds the realized jammer power received by
/// each UE at this step (zero when the jammer is inactive, out of
/// range, or absent); it is drawn by the caller so this function stays
/// deterministic in its inputs.
pub fn build_snapshot(
    state: &NetworkState,
    channels: &ChannelSet,
    params: &ChannelParams,
    threshold_db: f64,
    norm: &NormalizationConstants,
    jammer_power_per_ue: &[f64],
) -> Result<GraphSnapshot> {
    let n_aps = state.ap_positions.len();
    let n_ues = state.ues.len();
    if channels.n_aps != n_aps || channels.n_ues() != n_ues {
        return Err(Error::DimensionMismatch(format!(
            "channel set is {}x{}, state is {}x{}",
            channels.n_ues(),
            channels.n_aps,
            n_ues,
            n_aps
        )));
    }
    if jammer_power_per_ue.len() != n_ues {
        return Err(Error::DimensionMismatch(format!(
            "{} jammer power entries for {} UEs",
            jammer_power_per_ue.len(),
            n_ues
        )));
    }

    let mut edges = Vec::with_capacity(state.assignment.pairs.len());
    for &(ap, ue) in &state.assignment.pairs {
        let serving = channels.get(ue, ap);
        let interferers: Vec<ChannelVector> = (0..n_aps)
            .filter(|&m| m != ap)
            .map(|m| channels.get(ue, m).clone())
            .collect();
        let p_j = jammer_power_per_ue[ue];
        let gamma = sinr_jammed(serving, &interferers, params.noise_power, p_j)?;
        let sinr_db = 10.0 * gamma.log10();
        if sinr_db > threshold_db {
            let distance = euclid(state.ap_positions[ap], state.ues[ue].position);
            edges.push(EdgeRecord {
                ap_id: ap,
                ue_id: n_aps + ue,
                distance,
                sinr_db,
                weight: (
                    norm.normalize_distance(distance),
                    norm.normalize_sinr_db(sinr_db),
                ),
            });
        }
    }
    edges.sort_by_key(|e| (e.ap_id, e.ue_id));

    let mut degree = vec![0usize; n_aps + n_ues];
    for e in &edges {
        degree[e.ap_id] += 1;
        degree[e.ue_id] += 1;
    }

    let mut nodes = Vec::with_capacity(n_aps + n_ues);
    for (i, &pos) in state.ap_positions.iter().enumerate() {
        nodes.push(NodeRecord {
            id: i,
            node_type: NodeType::Ap,
            position: pos,
            degree: degree[i],
        });
    }
    for (i, ue) in state.ues.iter().enumerate() {
        let id = n_aps + i;
        nodes.push(NodeRecord {
            id,
            node_type: NodeType::Ue,
            position: ue.position,
            degree: degree[id],
        });
    }

    Ok(GraphSnapshot {
        time_index: state.time_index,
        nodes,
        edges,
        jammer_active: state.jammer.map(|j| j.active).unwrap_or(false),
    })
}

/// Number of edges incident to `node_id` in the snapshot.
pub fn degree_of(snapshot: &GraphSnapshot, node_id: usize) -> Result<usize> {
    if !snapshot.nodes.iter().any(|n| n.id == node_id) {
        return Err(Error::UnknownNode(node_id));
    }
    Ok(snapshot
        .edges
        .iter()
        .filter(|e| e.ap_id == node_id || e.ue_id == node_id)
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, los_phase_for_transmitter, Complex};
    use crate::rng::stream;

    #[test]
    fn single_ap_picks_nearest_ue() {
        let aps = [(0.0, 0.0)];
        let ues = [(1.0, 0.0), (5.0, 0.0)];
        let got = assign_users(&aps, &ues);
        assert_eq!(got.pairs, vec![(0, 0)]);
    }

    #[test]
    fn greedy_two_by_two() {
        let aps = [(0.0, 0.0), (10.0, 0.0)];
        let ues = [(1.0, 0.0), (9.0, 0.0)];
        let got = assign_users(&aps, &ues);
        let mut pairs = got.pairs.clone();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_picks_global_minimum_first() {
        // Distances: (0,0)=1.0, (0,1)=1.1, (1,0)=1.0, (1,1)=0.9.
        // The globally closest couple (AP1, UE1) goes first.
        let aps = [(0.0, 0.0), (2.0, 0.0)];
        let ues = [(1.0, 0.0), (1.1, 0.0)];
        let got = assign_users(&aps, &ues);
        assert_eq!(got.pairs, vec![(1, 1), (0, 0)]);
    }

    #[test]
    fn tie_breaks_lexicographically() {
        // Both APs are at distance 1 from both UEs.
        let aps = [(0.0, 0.0), (0.0, 2.0)];
        let ues = [(0.0, 1.0), (0.0, 1.0)];
        let got = assign_users(&aps, &ues);
        assert_eq!(got.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn assignment_size_is_min_of_sides() {
        let aps = [(0.0, 0.0), (10.0, 0.0), (20.0, 0.0)];
        let ues = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0), (5.0, 5.0)];
        let got = assign_users(&aps, &ues);
        assert_eq!(got.pairs.len(), 3);
        let mut seen_aps: Vec<usize> = got.pairs.iter().map(|p| p.0).collect();
        let mut seen_ues: Vec<usize> = got.pairs.iter().map(|p| p.1).collect();
        seen_aps.dedup();
        seen_ues.dedup();
        assert_eq!(seen_aps.len(), 3);
        assert_eq!(seen_ues.len(), 3);
    }

    fn toy_params() -> ChannelParams {
        ChannelParams {
            beta: 1.0,
            d0: 100.0,
            noise_power: 0.001,
            n_antennas: 4,
            jammer_power: 1.0,
            jammer_radius: 350.0,
        }
    }

    fn toy_state(jammer: Option<JammerState>) -> NetworkState {
        let ap_positions = vec![(100.0, 500.0), (900.0, 500.0)];
        let ues = vec![
            UeState {
                position: (200.0, 500.0),
                ref_velocity: (0.0, 0.0),
            },
            UeState {
                position: (800.0, 500.0),
                ref_velocity: (0.0, 0.0),
            },
            UeState {
                position: (500.0, 100.0),
                ref_velocity: (0.0, 0.0),
            },
        ];
        let assignment = assign_users(
            &ap_positions,
            &ues.iter().map(|u| u.position).collect::<Vec<_>>(),
        );
        NetworkState {
            time_index: 0,
            ap_positions,
            ues,
            assignment,
            jammer,
        }
    }

    fn draw_set(state: &NetworkState, params: &ChannelParams, seed: u64) -> ChannelSet {
        let mut rng = stream(seed, 0);
        let n_aps = state.ap_positions.len();
        let mut vectors = Vec::new();
        for ue in &state.ues {
            for (m, &ap) in state.ap_positions.iter().enumerate() {
                let d = euclid(ap, ue.position);
                let phase = los_phase_for_transmitter(m, n_aps);
                vectors.push(draw_channel(&mut rng, params, d, phase).unwrap());
            }
        }
        ChannelSet::new(vectors, n_aps).unwrap()
    }

    #[test]
    fn snapshot_has_full_node_set_and_consistent_degrees() {
        let params = toy_params();
        let state = toy_state(None);
        let channels = draw_set(&state, &params, 21);
        let norm = NormalizationConstants::for_area(1000.0);
        let snap = build_snapshot(&state, &channels, &params, 5.0, &norm, &[0.0; 3]).unwrap();

        assert_eq!(snap.nodes.len(), 5);
        assert!(!snap.jammer_active);
        let degree_sum: usize = snap.nodes.iter().map(|n| n.degree).sum();
        assert_eq!(degree_sum, 2 * snap.edges.len());
        for node in &snap.nodes {
            assert_eq!(degree_of(&snap, node.id).unwrap(), node.degree);
        }
        for e in &snap.edges {
            assert!(e.sinr_db > 5.0);
            assert!((0.0..=1.0).contains(&e.weight.0));
            assert!((0.0..=1.0).contains(&e.weight.1));
        }
    }

    #[test]
    fn deterministic_two_ap_snapshot_matches_hand_oracle() {
        // beta = 1 and fixed geometry: every SINR is computable by hand
        // from the path-loss law and the LOS phases. With two APs the
        // phase ramps are 0 and pi per antenna, so over four antennas
        // the LOS directions are exactly orthogonal and the SINR is
        // noise-limited.
        let params = toy_params();
        let state = toy_state(None);
        let channels = draw_set(&state, &params, 22);
        let norm = NormalizationConstants::for_area(1000.0);
        let snap = build_snapshot(&state, &channels, &params, 5.0, &norm, &[0.0; 3]).unwrap();

        // UE0 at 100 m from AP0: sigma_s^2 = 1, Gamma = 1 / noise.
        let expect = 1.0f64 / 0.001;
        let edge = snap.edges.iter().find(|e| e.ue_id == 2).unwrap();
        assert!((edge.sinr_db - 10.0 * expect.log10()).abs() < 1e-9);
        assert!((edge.distance - 100.0).abs() < 1e-9);

        // UE2 is the surplus user (two APs, three UEs): isolated node.
        assert_eq!(degree_of(&snap, 4).unwrap(), 0);
    }

    #[test]
    fn jammed_edges_are_subset_of_clean_edges() {
        let params = toy_params();
        let jam = JammerState {
            position: (200.0, 500.0),
            active: true,
        };
        let state_clean = toy_state(None);
        let state_jam = NetworkState {
            jammer: Some(jam),
            ..state_clean.clone()
        };
        let channels = draw_set(&state_clean, &params, 23);
        let norm = NormalizationConstants::for_area(1000.0);

        // UE0 sits on top of the jammer, UE1 is out of range.
        let p_j = [0.9, 0.0, 0.0];
        let clean =
            build_snapshot(&state_clean, &channels, &params, 5.0, &norm, &[0.0; 3]).unwrap();
        let jammed = build_snapshot(&state_jam, &channels, &params, 5.0, &norm, &p_j).unwrap();

        assert!(jammed.jammer_active);
        for e in &jammed.edges {
            assert!(
                clean
                    .edges
                    .iter()
                    .any(|c| c.ap_id == e.ap_id && c.ue_id == e.ue_id),
                "jammed edge ({}, {}) missing from clean snapshot",
                e.ap_id,
                e.ue_id
            );
        }
        assert!(
            jammed.edges.len() < clean.edges.len(),
            "jamming should cut the UE0 edge"
        );
    }

    #[test]
    fn unknown_node_id_is_an_error() {
        let params = toy_params();
        let state = toy_state(None);
        let channels = draw_set(&state, &params, 24);
        let norm = NormalizationConstants::for_area(1000.0);
        let snap = build_snapshot(&state, &channels, &params, 5.0, &norm, &[0.0; 3]).unwrap();
        assert!(matches!(degree_of(&snap, 99), Err(Error::UnknownNode(99))));
    }

    #[test]
    fn channel_set_shape_is_checked() {
        let v = vec![ChannelVector::new(vec![Complex::new(1.0, 0.0)]); 5];
        assert!(ChannelSet::new(v, 2).is_err());
    }

    #[test]
    fn threshold_gates_edge_creation() {
        // Single AP, single UE, single antenna: Gamma = |x|^4 / noise.
        // x^4 = 0.01 gives 10 dB (edge), x^4 = 0.001 gives 0 dB (none).
        let params = ChannelParams {
            noise_power: 0.001,
            n_antennas: 1,
            ..toy_params()
        };
        let state = NetworkState {
            time_index: 0,
            ap_positions: vec![(100.0, 100.0)],
            ues: vec![UeState {
                position: (200.0, 100.0),
                ref_velocity: (0.0, 0.0),
            }],
            assignment: AssignmentMap {
                pairs: vec![(0, 0)],
            },
            jammer: None,
        };
        let norm = NormalizationConstants::for_area(1000.0);
        let mk = |x: f64| {
            ChannelSet::new(vec![ChannelVector::new(vec![Complex::new(x, 0.0)])], 1).unwrap()
        };

        let ten_db = mk(0.01f64.powf(0.25));
        let snap = build_snapshot(&state, &ten_db, &params, 5.0, &norm, &[0.0]).unwrap();
        assert_eq!(snap.edges.len(), 1);
        assert!((snap.edges[0].sinr_db - 10.0).abs() < 1e-9);

        let zero_db = mk(0.001f64.powf(0.25));
        let snap = build_snapshot(&state, &zero_db, &params, 5.0, &norm, &[0.0]).unwrap();
        assert!(snap.edges.is_empty());
    }

    #[test]
    fn full_default_geometry_matches_distance_only_oracle() {
        // beta = 1 makes each SINR a pure function of distances and the
        // per-AP LOS phases: s^4 / (noise + s^2 sum_i c_i s_i^2) where
        // s^2 = (d0/d)^2 and c_i = |u_serving^H u_i|^2 is recomputed
        // below from the phase ramps alone.
        let params = toy_params();
        let ap_positions = vec![
            (200.0, 200.0),
            (800.0, 200.0),
            (200.0, 800.0),
            (800.0, 800.0),
            (500.0, 500.0),
        ];
        let ue_positions: Vec<(f64, f64)> = vec![
            (150.0, 260.0),
            (740.0, 230.0),
            (300.0, 705.0),
            (820.0, 830.0),
            (490.0, 560.0),
            (90.0, 90.0),
            (910.0, 450.0),
            (520.0, 120.0),
            (260.0, 480.0),
            (660.0, 660.0),
        ];
        let ues: Vec<UeState> = ue_positions
            .iter()
            .map(|&position| UeState {
                position,
                ref_velocity: (0.0, 0.0),
            })
            .collect();
        let assignment = assign_users(&ap_positions, &ue_positions);
        let state = NetworkState {
            time_index: 0,
            ap_positions: ap_positions.clone(),
            ues,
            assignment: assignment.clone(),
            jammer: None,
        };
        let mut rng = stream(31, 0);
        let mut vectors = Vec::new();
        for &ue in &ue_positions {
            for (m, &ap) in ap_positions.iter().enumerate() {
                let phase = los_phase_for_transmitter(m, 5);
                vectors.push(draw_channel(&mut rng, &params, euclid(ap, ue), phase).unwrap());
            }
        }
        let channels = ChannelSet::new(vectors, 5).unwrap();
        let norm = NormalizationConstants::for_area(1000.0);
        let snap = build_snapshot(&state, &channels, &params, 5.0, &norm, &[0.0; 10]).unwrap();

        // |u_m^H u_m'|^2 from the phase ramps, computed independently.
        let n_a = params.n_antennas;
        let cross = |m: usize, mp: usize| -> f64 {
            let delta = los_phase_for_transmitter(mp, 5) - los_phase_for_transmitter(m, 5);
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for a in 0..n_a {
                re += (delta * a as f64).cos();
                im += (delta * a as f64).sin();
            }
            (re * re + im * im) / (n_a * n_a) as f64
        };

        // Oracle pass over every assigned pair.
        let mut expected_edges = 0;
        for &(ap, ue) in &assignment.pairs {
            let d_serv = euclid(ap_positions[ap], ue_positions[ue]);
            let s2 = (params.d0 / d_serv).powi(2);
            let mut denom = params.noise_power;
            for (m, &ap_pos) in ap_positions.iter().enumerate() {
                if m != ap {
                    let i2 = (params.d0 / euclid(ap_pos, ue_positions[ue])).powi(2);
                    denom += s2 * i2 * cross(ap, m);
                }
            }
            let gamma_db = 10.0 * (s2 * s2 / denom).log10();
            let edge = snap
                .edges
                .iter()
                .find(|e| e.ap_id == ap && e.ue_id == 5 + ue);
            if gamma_db > 5.0 {
                expected_edges += 1;
                let edge = edge.expect("oracle says this edge exists");
                assert!((edge.sinr_db - gamma_db).abs() < 1e-9);
                assert!((edge.distance - d_serv).abs() < 1e-9);
                assert!((edge.weight.0 - norm.normalize_distance(d_serv)).abs() < 1e-12);
                assert!((edge.weight.1 - norm.normalize_sinr_db(gamma_db)).abs() < 1e-12);
            } else {
                assert!(
                    edge.is_none(),
                    "edge ({ap},{ue}) should be cut by the threshold"
                );
            }
        }
        assert_eq!(snap.edges.len(), expected_edges);
        assert!(
            expected_edges > 0,
            "geometry should produce at least one edge"
        );
    }

    #[test]
    fn assignment_ignores_ue_list_order() {
        let aps = [(100.0, 100.0), (600.0, 300.0), (300.0, 800.0)];
        let ues = [
            (140.0, 90.0),
            (650.0, 340.0),
            (250.0, 760.0),
            (500.0, 500.0),
            (900.0, 900.0),
        ];
        let base = assign_users(&aps, &ues);
        let base_set: std::collections::BTreeSet<(usize, usize)> =
            base.pairs.iter().copied().collect();

        // Reverse the UE list and map indices back.
        let reversed: Vec<(f64, f64)> = ues.iter().rev().copied().collect();
        let got = assign_users(&aps, &reversed);
        let got_set: std::collections::BTreeSet<(usize, usize)> = got
            .pairs
            .iter()
            .map(|&(a, u)| (a, ues.len() - 1 - u))
            .collect();
        assert_eq!(base_set, got_set);
    }
}
