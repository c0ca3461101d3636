//! Labeled dynamic-graph dataset generation and serialization.
//!
//! A dataset is a directory holding one `seq_<id>` file per simulated
//! sequence plus a `manifest` file with labels, tau values and the
//! train/validation/test split. Both formats are line-oriented text
//! with schema version strings; every real number is written with full
//! binary64 round-trip precision. The exact grammar is documented in
//! `docs/dataset-format.md`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{draw_channel, jammer_received_power, los_phase_for_transmitter, ChannelParams};
use crate::error::{Error, Result};
use crate::mobility::{init_ue, step_ue, MobilityParams, UeState, VelocitySupport};
use crate::rng::{stream, SequenceRng, DATASET_STREAM};
use crate::topology::{
    assign_users, build_snapshot, ChannelSet, EdgeRecord, GraphSnapshot, JammerState, NetworkState,
    NodeRecord, NodeType, NormalizationConstants,
};

pub const SEQUENCE_SCHEMA: &str = "cfjam-seq-v1";
pub const MANIFEST_SCHEMA: &str = "cfjam-manifest-v1";

/// Placement of the jammer's active burst inside each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstOffset {
    /// Burst starts at the first step of every frame.
    Fixed,
    /// Burst start drawn uniformly per frame (still contiguous).
    UniformRandom,
}

/// Everything needed to simulate one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_aps: usize,
    pub n_ues: usize,
    /// Fixed AP coordinates, meters.
    pub ap_positions: Vec<(f64, f64)>,
    /// Side L of the square area, meters.
    pub area_side: f64,
    /// LOS mixing factor; 1 = deterministic channel, 0 = Rayleigh.
    pub beta: f64,
    pub noise_power: f64,
    /// Connection threshold Gamma_0, dB.
    pub threshold_db: f64,
    /// Max reference-velocity component, m/s.
    pub v_max: f64,
    /// Velocity perturbation std, m/s.
    pub sigma_w: f64,
    /// Sampling interval T, seconds.
    pub sample_time: f64,
    /// Frame duration T_F, seconds.
    pub frame_duration: f64,
    /// Snapshots per sequence.
    pub n_steps: usize,
    /// Active jammer steps per frame for jammed sequences.
    pub tau: usize,
    pub jammer_power: f64,
    pub jammer_radius: f64,
    pub seed: u64,
    /// Antennas per AP.
    pub n_antennas: usize,
    /// Unit-variance reference distance, meters.
    pub d0: f64,
    /// Minimum UE-AP distance, meters.
    pub d_min: f64,
    pub velocity_support: VelocitySupport,
    pub burst_offset: BurstOffset,
}

impl Default for ScenarioConfig {
    /// The experimental setup: 1 km box, five fixed APs (four corners
    /// plus center), ten UEs at walking speed, 5 dB threshold, 80-step
    /// sequences with 10-step frames.
    fn default() -> Self {
        ScenarioConfig {
            n_aps: 5,
            n_ues: 10,
            ap_positions: vec![
                (200.0, 200.0),
                (800.0, 200.0),
                (200.0, 800.0),
                (800.0, 800.0),
                (500.0, 500.0),
            ],
            area_side: 1000.0,
            beta: 1.0,
            noise_power: 0.001,
            threshold_db: 5.0,
            v_max: 6.0 / 3.6,
            sigma_w: 0.5,
            sample_time: 1.0,
            frame_duration: 10.0,
            n_steps: 80,
            tau: 10,
            jammer_power: 10.0,
            jammer_radius: 350.0,
            seed: 1,
            n_antennas: 4,
            d0: 100.0,
            d_min: 10.0,
            velocity_support: VelocitySupport::Signed,
            burst_offset: BurstOffset::Fixed,
        }
    }
}

impl ScenarioConfig {
    pub fn steps_per_frame(&self) -> usize {
        (self.frame_duration / self.sample_time).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.channel_params().validate()?;
        self.mobility_params().validate()?;
        if self.n_aps == 0 || self.n_ues == 0 {
            return Err(Error::Config("n_aps and n_ues must be positive".into()));
        }
        if self.ap_positions.len() != self.n_aps {
            return Err(Error::Config(format!(
                "{} AP positions given for n_aps = {}",
                self.ap_positions.len(),
                self.n_aps
            )));
        }
        for &(x, y) in &self.ap_positions {
            if !(0.0..=self.area_side).contains(&x) || !(0.0..=self.area_side).contains(&y) {
                return Err(Error::Config(format!(
                    "AP position ({x}, {y}) outside the [0, {}] box",
                    self.area_side
                )));
            }
        }
        let ratio = self.frame_duration / self.sample_time;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "frame_duration / sample_time must be a positive integer, got {ratio}"
            )));
        }
        let spf = self.steps_per_frame();
        if self.n_steps == 0 || self.n_steps % spf != 0 {
            return Err(Error::Config(format!(
                "n_steps ({}) must be a positive multiple of steps_per_frame ({spf})",
                self.n_steps
            )));
        }
        if self.tau > spf {
            return Err(Error::Config(format!(
                "tau ({}) exceeds steps_per_frame ({spf})",
                self.tau
            )));
        }
        Ok(())
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            beta: self.beta,
            d0: self.d0,
            noise_power: self.noise_power,
            n_antennas: self.n_antennas,
            jammer_power: self.jammer_power,
            jammer_radius: self.jammer_radius,
        }
    }

    pub fn mobility_params(&self) -> MobilityParams {
        MobilityParams {
            area_side: self.area_side,
            v_max: self.v_max,
            sigma_w: self.sigma_w,
            sample_time: self.sample_time,
            d_min: self.d_min,
            velocity_support: self.velocity_support,
        }
    }

    pub fn normalization(&self) -> NormalizationConstants {
        NormalizationConstants::for_area(self.area_side)
    }

    /// Canonical key=value rendering, one field per line, fixed order.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}", self.digest_body());
        let _ = writeln!(s, "tau={}", self.tau);
        s
    }

    fn digest_body(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_aps={}", self.n_aps);
        let _ = writeln!(s, "n_ues={}", self.n_ues);
        for (i, &(x, y)) in self.ap_positions.iter().enumerate() {
            let _ = writeln!(s, "ap_{i}={x} {y}");
        }
        let _ = writeln!(s, "area_side={}", self.area_side);
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "noise_power={}", self.noise_power);
        let _ = writeln!(s, "threshold_db={}", self.threshold_db);
        let _ = writeln!(s, "v_max={}", self.v_max);
        let _ = writeln!(s, "sigma_w={}", self.sigma_w);
        let _ = writeln!(s, "sample_time={}", self.sample_time);
        let _ = writeln!(s, "frame_duration={}", self.frame_duration);
        let _ = writeln!(s, "n_steps={}", self.n_steps);
        let _ = writeln!(s, "jammer_power={}", self.jammer_power);
        let _ = writeln!(s, "jammer_radius={}", self.jammer_radius);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "n_antennas={}", self.n_antennas);
        let _ = writeln!(s, "d0={}", self.d0);
        let _ = writeln!(s, "d_min={}", self.d_min);
        let _ = writeln!(
            s,
            "velocity_support={}",
            match self.velocity_support {
                VelocitySupport::Signed => "signed",
                VelocitySupport::Positive => "positive",
            }
        );
        let _ = writeln!(
            s,
            "burst_offset={}",
            match self.burst_offset {
                BurstOffset::Fixed => "fixed",
                BurstOffset::UniformRandom => "uniform-random",
            }
        );
        s
    }

    /// Digest identifying the scenario. `tau` is excluded: it varies
    /// per sequence within one dataset.
    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a64(self.digest_body().as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-step jammer activity: in every frame the first `tau` steps are
/// active, the rest idle.
pub fn jammer_schedule(n_steps: usize, steps_per_frame: usize, tau: usize) -> Result<Vec<bool>> {
    schedule_with_offsets(n_steps, steps_per_frame, tau, None)
}

/// Like [`jammer_schedule`] but with a per-frame burst start offset;
/// each burst stays contiguous inside its frame.
pub fn schedule_with_offsets(
    n_steps: usize,
    steps_per_frame: usize,
    tau: usize,
    offsets: Option<&[usize]>,
) -> Result<Vec<bool>> {
    if steps_per_frame == 0 {
        return Err(Error::Config("steps_per_frame must be positive".into()));
    }
    if tau > steps_per_frame {
        return Err(Error::Config(format!(
            "tau ({tau}) exceeds steps_per_frame ({steps_per_frame})"
        )));
    }
    if n_steps % steps_per_frame != 0 {
        return Err(Error::Config(format!(
            "n_steps ({n_steps}) is not a multiple of steps_per_frame ({steps_per_frame})"
        )));
    }
    let n_frames = n_steps / steps_per_frame;
    if let Some(offs) = offsets {
        if offs.len() != n_frames {
            return Err(Error::Config(format!(
                "{} offsets for {n_frames} frames",
                offs.len()
            )));
        }
        if let Some(&bad) = offs.iter().find(|&&o| o + tau > steps_per_frame) {
            return Err(Error::Config(format!(
                "burst offset {bad} pushes a tau={tau} burst past the frame"
            )));
        }
    }
    let mut out = vec![false; n_steps];
    for f in 0..n_frames {
        let start = f * steps_per_frame + offsets.map(|o| o[f]).unwrap_or(0);
        for s in out.iter_mut().skip(start).take(tau) {
            *s = true;
        }
    }
    Ok(out)
}

/// One labeled simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSequence {
    pub snapshots: Vec<GraphSnapshot>,
    /// True when the jammer was active in at least one snapshot.
    pub label: bool,
    /// Active steps per frame (0 for clean sequences).
    pub tau: usize,
    pub jammer_position: Option<(f64, f64)>,
    pub config_digest: String,
    /// Scenario metadata needed by feature extraction.
    pub area_side: f64,
}

impl GraphSequence {
    pub fn n_aps(&self) -> usize {
        self.snapshots.first().map(|s| s.n_aps()).unwrap_or(0)
    }
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Simulate one sequence. The jammer, if present, is placed uniformly
/// in the box and follows the frame schedule from the config's `tau`.
pub fn generate_sequence(
    config: &ScenarioConfig,
    jammed: bool,
    rng: &mut SequenceRng,
) -> Result<GraphSequence> {
    config.validate()?;
    let chan_params = config.channel_params();
    let mob_params = config.mobility_params();
    let norm = config.normalization();
    let spf = config.steps_per_frame();

    let (schedule, jammer_position) = if jammed {
        let pos = (
            rng.jammer.random_range(0.0..=config.area_side),
            rng.jammer.random_range(0.0..=config.area_side),
        );
        let sched = match config.burst_offset {
            BurstOffset::Fixed => jammer_schedule(config.n_steps, spf, config.tau)?,
            BurstOffset::UniformRandom => {
                let n_frames = config.n_steps / spf;
                let offsets: Vec<usize> = (0..n_frames)
                    .map(|_| rng.jammer.random_range(0..=(spf - config.tau)))
                    .collect();
                schedule_with_offsets(config.n_steps, spf, config.tau, Some(&offsets))?
            }
        };
        (sched, Some(pos))
    } else {
        (vec![false; config.n_steps], None)
    };

    let mut ues: Vec<UeState> = (0..config.n_ues)
        .map(|_| init_ue(&mut rng.mobility, &mob_params, &config.ap_positions))
        .collect::<Result<_>>()?;

    let mut snapshots = Vec::with_capacity(config.n_steps);
    for n in 0..config.n_steps {
        if n > 0 {
            for ue in ues.iter_mut() {
                *ue = step_ue(&mut rng.mobility, ue, &mob_params, &config.ap_positions)?;
            }
        }
        let ue_positions: Vec<(f64, f64)> = ues.iter().map(|u| u.position).collect();
        let assignment = assign_users(&config.ap_positions, &ue_positions);

        let mut vectors = Vec::with_capacity(config.n_ues * config.n_aps);
        for &ue_pos in &ue_positions {
            for (m, &ap_pos) in config.ap_positions.iter().enumerate() {
                let d = euclid(ap_pos, ue_pos);
                let phase = los_phase_for_transmitter(m, config.n_aps);
                vectors.push(draw_channel(&mut rng.channel, &chan_params, d, phase)?);
            }
        }
        let channels = ChannelSet::new(vectors, config.n_aps)?;

        let active = schedule[n];
        let mut jammer_p = vec![0.0; config.n_ues];
        if active {
            let jpos = jammer_position.expect("active schedule implies a placed jammer");
            for (k, &ue_pos) in ue_positions.iter().enumerate() {
                jammer_p[k] =
                    jammer_received_power(&mut rng.jammer, &chan_params, euclid(jpos, ue_pos))?;
            }
        }

        let state = NetworkState {
            time_index: n,
            ap_positions: config.ap_positions.clone(),
            ues: ues.clone(),
            assignment,
            jammer: jammer_position.map(|position| JammerState { position, active }),
        };
        snapshots.push(build_snapshot(
            &state,
            &channels,
            &chan_params,
            config.threshold_db,
            &norm,
            &jammer_p,
        )?);
    }

    let label = snapshots.iter().any(|s| s.jammer_active);
    Ok(GraphSequence {
        snapshots,
        label,
        tau: if jammed { config.tau } else { 0 },
        jammer_position,
        config_digest: config.digest(),
        area_side: config.area_side,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub id: usize,
    pub file: String,
    pub label: bool,
    pub tau: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub scenario: String,
    pub config_digest: String,
    pub sequences: Vec<SequenceEntry>,
}

impl DatasetManifest {
    pub fn split_ids(&self, split: Split) -> Vec<usize> {
        self.sequences
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id)
            .collect()
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &SequenceEntry> {
        self.sequences.iter().filter(move |e| e.split == split)
    }
}

/// Aggregates printed by the generate command.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub n_clean: usize,
    pub n_jammed: usize,
    /// (tau, count) over jammed sequences, ascending tau.
    pub per_tau: Vec<(usize, usize)>,
    pub mean_edges_per_snapshot: f64,
}

/// Generate `n_sequences` (half clean, half jammed), write them plus a
/// manifest under `out_dir`, and return the manifest with statistics.
///
/// Jammed sequences take their tau from a balanced multiset over
/// `tau_set`, shuffled with the dataset stream. The split is 70/10/20,
/// stratified by label and tau.
pub fn generate_dataset(
    config: &ScenarioConfig,
    n_sequences: usize,
    tau_set: &[usize],
    scenario_tag: &str,
    out_dir: &Path,
) -> Result<(DatasetManifest, DatasetStats)> {
    config.validate()?;
    if n_sequences < 10 {
        return Err(Error::Config(format!(
            "need at least 10 sequences, got {n_sequences}"
        )));
    }
    if tau_set.is_empty() {
        return Err(Error::Config("tau_set must not be empty".into()));
    }
    let spf = config.steps_per_frame();
    if let Some(&bad) = tau_set.iter().find(|&&t| t == 0 || t > spf) {
        return Err(Error::Config(format!(
            "tau_set entries must be in 1..={spf}, got {bad}"
        )));
    }

    let n_jammed = n_sequences / 2;
    let n_clean = n_sequences - n_jammed;

    // Balanced tau multiset, shuffled for arbitrary id order.
    let mut taus: Vec<usize> = (0..n_jammed).map(|i| tau_set[i % tau_set.len()]).collect();
    let mut drng = stream(config.seed, DATASET_STREAM);
    for i in (1..taus.len()).rev() {
        let j = drng.random_range(0..=i);
        taus.swap(i, j);
    }

    fs::create_dir_all(out_dir)?;

    struct GenRecord {
        id: usize,
        file: String,
        label: bool,
        tau: usize,
        edge_count: usize,
    }

    let records: Vec<Result<GenRecord>> = (0..n_sequences)
        .into_par_iter()
        .map(|id| {
            let jammed = id >= n_clean;
            let mut cfg = config.clone();
            if jammed {
                cfg.tau = taus[id - n_clean];
            }
            let mut rng = SequenceRng::for_sequence(config.seed, id as u64);
            let seq = generate_sequence(&cfg, jammed, &mut rng)?;
            let file = format!("seq_{id:05}");
            save_sequence(&seq, &out_dir.join(&file))?;
            Ok(GenRecord {
                id,
                file,
                label: seq.label,
                tau: seq.tau,
                edge_count: seq.snapshots.iter().map(|s| s.edges.len()).sum(),
            })
        })
        .collect();

    let mut recs = Vec::with_capacity(n_sequences);
    for r in records {
        recs.push(r?);
    }
    recs.sort_by_key(|r| r.id);

    // Stratified 70/10/20 split: largest-remainder counts per stratum.
    let mut strata: Vec<(bool, usize, Vec<usize>)> = Vec::new();
    strata.push((
        false,
        0,
        recs.iter().filter(|r| !r.label).map(|r| r.id).collect(),
    ));
    let mut tau_sorted = tau_set.to_vec();
    tau_sorted.sort_unstable();
    tau_sorted.dedup();
    for &t in &tau_sorted {
        let ids: Vec<usize> = recs
            .iter()
            .filter(|r| r.label && r.tau == t)
            .map(|r| r.id)
            .collect();
        if !ids.is_empty() {
            strata.push((true, t, ids));
        }
    }

    let mut split_of = vec![Split::Train; n_sequences];
    for (_, _, ids) in &strata {
        let (t, v) = split_counts(ids.len());
        for (k, &id) in ids.iter().enumerate() {
            split_of[id] = if k < t {
                Split::Train
            } else if k < t + v {
                Split::Validation
            } else {
                Split::Test
            };
        }
    }

    let sequences: Vec<SequenceEntry> = recs
        .iter()
        .map(|r| SequenceEntry {
            id: r.id,
            file: r.file.clone(),
            label: r.label,
            tau: r.tau,
            split: split_of[r.id],
        })
        .collect();

    let manifest = DatasetManifest {
        scenario: scenario_tag.to_string(),
        config_digest: config.digest(),
        sequences,
    };
    save_manifest(&manifest, &out_dir.join("manifest"))?;

    let total_edges: usize = recs.iter().map(|r| r.edge_count).sum();
    let total_snapshots = n_sequences * config.n_steps;
    let per_tau: Vec<(usize, usize)> = tau_sorted
        .iter()
        .map(|&t| (t, recs.iter().filter(|r| r.label && r.tau == t).count()))
        .collect();
    let stats = DatasetStats {
        n_clean: recs.iter().filter(|r| !r.label).count(),
        n_jammed: recs.iter().filter(|r| r.label).count(),
        per_tau,
        mean_edges_per_snapshot: total_edges as f64 / total_snapshots as f64,
    };

    Ok((manifest, stats))
}

/// Largest-remainder allocation of (train, validation) counts for a
/// stratum of size n under 70/10/20; test takes the rest.
fn split_counts(n: usize) -> (usize, usize) {
    let quotas = [0.7 * n as f64, 0.1 * n as f64, 0.2 * n as f64];
    let mut counts = [quotas[0] as usize, quotas[1] as usize, quotas[2] as usize];
    let mut rema: Vec<(f64, usize)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (q - q.floor(), i))
        .collect();
    rema.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut left = n - counts.iter().sum::<usize>();
    for &(_, i) in &rema {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    (counts[0], counts[1])
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Write one sequence in the `cfjam-seq-v1` format.
pub fn save_sequence(seq: &GraphSequence, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{SEQUENCE_SCHEMA}");
    let _ = writeln!(out, "config_digest {}", seq.config_digest);
    let _ = writeln!(out, "area_side {}", seq.area_side);
    let n_aps = seq.n_aps();
    let n_nodes = seq.snapshots.first().map(|s| s.nodes.len()).unwrap_or(0);
    let _ = writeln!(out, "n_aps {n_aps}");
    let _ = writeln!(out, "n_ues {}", n_nodes - n_aps);
    let _ = writeln!(out, "n_steps {}", seq.snapshots.len());
    let _ = writeln!(out, "label {}", seq.label as u8);
    let _ = writeln!(out, "tau {}", seq.tau);
    match seq.jammer_position {
        Some((x, y)) => {
            let _ = writeln!(out, "jammer_position {x} {y}");
        }
        None => {
            let _ = writeln!(out, "jammer_position none");
        }
    }
    for snap in &seq.snapshots {
        let _ = writeln!(
            out,
            "snapshot {} {} {}",
            snap.time_index,
            snap.jammer_active as u8,
            snap.edges.len()
        );
        for n in &snap.nodes {
            let _ = writeln!(
                out,
                "node {} {} {} {} {}",
                n.id, n.node_type as u8, n.position.0, n.position.1, n.degree
            );
        }
        for e in &snap.edges {
            let _ = writeln!(
                out,
                "edge {} {} {} {} {} {}",
                e.ap_id, e.ue_id, e.distance, e.sinr_db, e.weight.0, e.weight.1
            );
        }
    }
    let _ = writeln!(out, "end");
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

struct LineReader<'p> {
    lines: std::io::Lines<BufReader<fs::File>>,
    path: &'p Path,
    lineno: usize,
}

impl<'p> LineReader<'p> {
    fn open(path: &'p Path) -> Result<Self> {
        Ok(LineReader {
            lines: BufReader::new(fs::File::open(path)?).lines(),
            path,
            lineno: 0,
        })
    }

    fn next_line(&mut self, expect: &str) -> Result<String> {
        self.lineno += 1;
        match self.lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(e.into()),
            None => Err(Error::schema(
                self.path,
                expect,
                format!("file truncated at line {}", self.lineno),
            )),
        }
    }

    fn err(&self, field: &str, detail: impl Into<String>) -> Error {
        Error::schema(
            self.path,
            field,
            format!("line {}: {}", self.lineno, detail.into()),
        )
    }

    /// Read a line of the form `<key> <fields...>` and return the fields.
    fn keyed(&mut self, key: &str, n_fields: usize) -> Result<Vec<String>> {
        let line = self.next_line(key)?;
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != key {
            return Err(self.err(key, format!("expected '{key}', found '{head}'")));
        }
        let fields: Vec<String> = parts.map(str::to_string).collect();
        if fields.len() != n_fields {
            return Err(self.err(
                key,
                format!("expected {n_fields} fields, found {}", fields.len()),
            ));
        }
        Ok(fields)
    }

    /// Read a `<key> <value>` line and parse the value.
    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key, 1)?.remove(0);
        v.parse()
            .map_err(|_| self.err(key, format!("cannot parse '{v}'")))
    }
}

fn parse_num<T: std::str::FromStr>(r: &LineReader, field: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| r.err(field, format!("cannot parse '{s}'")))
}

/// Read one sequence; validates the schema version, table shapes and
/// stored degrees.
pub fn load_sequence(path: &Path) -> Result<GraphSequence> {
    let mut r = LineReader::open(path)?;
    let header = r.next_line("schema")?;
    if header != SEQUENCE_SCHEMA {
        return Err(r.err(
            "schema",
            format!("expected {SEQUENCE_SCHEMA}, found '{header}'"),
        ));
    }
    let config_digest = r.keyed("config_digest", 1)?.remove(0);
    let area_side: f64 = r.scalar("area_side")?;
    let n_aps: usize = r.scalar("n_aps")?;
    let n_ues: usize = r.scalar("n_ues")?;
    let n_steps: usize = r.scalar("n_steps")?;
    let label_raw: u8 = r.scalar("label")?;
    if label_raw > 1 {
        return Err(r.err("label", format!("must be 0 or 1, found {label_raw}")));
    }
    let tau: usize = r.scalar("tau")?;

    let jline = r.next_line("jammer_position")?;
    let jparts: Vec<&str> = jline.split_whitespace().collect();
    let jammer_position = match jparts.as_slice() {
        ["jammer_position", "none"] => None,
        ["jammer_position", x, y] => Some((
            parse_num::<f64>(&r, "jammer_position", x)?,
            parse_num::<f64>(&r, "jammer_position", y)?,
        )),
        _ => return Err(r.err("jammer_position", "malformed line")),
    };

    let n_nodes = n_aps + n_ues;
    let mut snapshots = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let head = r.keyed("snapshot", 3)?;
        let time_index: usize = parse_num(&r, "snapshot.time_index", &head[0])?;
        let active_raw: u8 = parse_num(&r, "snapshot.jammer_active", &head[1])?;
        if active_raw > 1 {
            return Err(r.err("snapshot.jammer_active", "must be 0 or 1"));
        }
        let n_edges: usize = parse_num(&r, "snapshot.n_edges", &head[2])?;

        let mut nodes = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let f = r.keyed("node", 5)?;
            let id: usize = parse_num(&r, "node.id", &f[0])?;
            if id != i {
                return Err(r.err("node.id", format!("expected {i}, found {id}")));
            }
            let ty: u8 = parse_num(&r, "node.type", &f[1])?;
            let node_type = match ty {
                0 => NodeType::Ap,
                1 => NodeType::Ue,
                _ => return Err(r.err("node.type", format!("must be 0 or 1, found {ty}"))),
            };
            let expected = if i < n_aps {
                NodeType::Ap
            } else {
                NodeType::Ue
            };
            if node_type != expected {
                return Err(r.err("node.type", format!("node {i} has the wrong type")));
            }
            nodes.push(NodeRecord {
                id,
                node_type,
                position: (
                    parse_num(&r, "node.x", &f[2])?,
                    parse_num(&r, "node.y", &f[3])?,
                ),
                degree: parse_num(&r, "node.degree", &f[4])?,
            });
        }

        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let f = r.keyed("edge", 6)?;
            let ap_id: usize = parse_num(&r, "edge.ap_id", &f[0])?;
            let ue_id: usize = parse_num(&r, "edge.ue_id", &f[1])?;
            if ap_id >= n_aps {
                return Err(r.err("edge.ap_id", format!("{ap_id} is not an AP id")));
            }
            if ue_id < n_aps || ue_id >= n_nodes {
                return Err(r.err("edge.ue_id", format!("{ue_id} is not a UE id")));
            }
            edges.push(EdgeRecord {
                ap_id,
                ue_id,
                distance: parse_num(&r, "edge.distance", &f[2])?,
                sinr_db: parse_num(&r, "edge.sinr_db", &f[3])?,
                weight: (
                    parse_num(&r, "edge.weight_distance", &f[4])?,
                    parse_num(&r, "edge.weight_sinr", &f[5])?,
                ),
            });
        }

        // Stored degrees must match the edge table.
        let mut deg = vec![0usize; n_nodes];
        for e in &edges {
            deg[e.ap_id] += 1;
            deg[e.ue_id] += 1;
        }
        if let Some(n) = nodes.iter().find(|n| n.degree != deg[n.id]) {
            return Err(r.err(
                "node.degree",
                format!(
                    "node {} stores degree {}, edges imply {}",
                    n.id, n.degree, deg[n.id]
                ),
            ));
        }

        snapshots.push(GraphSnapshot {
            time_index,
            nodes,
            edges,
            jammer_active: active_raw == 1,
        });
    }

    let endline = r.next_line("end")?;
    if endline != "end" {
        return Err(r.err(
            "n_steps",
            format!("header says {n_steps} snapshots but more records follow"),
        ));
    }

    let label = label_raw == 1;
    if label != snapshots.iter().any(|s| s.jammer_active) {
        return Err(r.err("label", "label does not match snapshot jammer flags"));
    }

    Ok(GraphSequence {
        snapshots,
        label,
        tau,
        jammer_position,
        config_digest,
        area_side,
    })
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{MANIFEST_SCHEMA}");
    let _ = writeln!(out, "scenario {}", manifest.scenario);
    let _ = writeln!(out, "config_digest {}", manifest.config_digest);
    let _ = writeln!(out, "n_sequences {}", manifest.sequences.len());
    for e in &manifest.sequences {
        let _ = writeln!(
            out,
            "sequence {} {} {} {} {}",
            e.id,
            e.file,
            e.label as u8,
            e.tau,
            e.split.as_str()
        );
    }
    let _ = writeln!(out, "end");
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut r = LineReader::open(path)?;
    let header = r.next_line("schema")?;
    if header != MANIFEST_SCHEMA {
        return Err(r.err(
            "schema",
            format!("expected {MANIFEST_SCHEMA}, found '{header}'"),
        ));
    }
    let scenario = r.keyed("scenario", 1)?.remove(0);
    let config_digest = r.keyed("config_digest", 1)?.remove(0);
    let n: usize = r.scalar("n_sequences")?;
    let mut sequences = Vec::with_capacity(n);
    for _ in 0..n {
        let f = r.keyed("sequence", 5)?;
        let label_raw: u8 = parse_num(&r, "sequence.label", &f[2])?;
        if label_raw > 1 {
            return Err(r.err("sequence.label", "must be 0 or 1"));
        }
        let split = Split::parse(&f[4])
            .ok_or_else(|| r.err("sequence.split", format!("unknown split '{}'", f[4])))?;
        sequences.push(SequenceEntry {
            id: parse_num(&r, "sequence.id", &f[0])?,
            file: f[1].clone(),
            label: label_raw == 1,
            tau: parse_num(&r, "sequence.tau", &f[3])?,
            split,
        });
    }
    let endline = r.next_line("end")?;
    if endline != "end" {
        return Err(r.err("n_sequences", "more sequence records than declared"));
    }
    // Ids must be unique and dense.
    let mut seen = vec![false; sequences.len()];
    for e in &sequences {
        if e.id >= sequences.len() || seen[e.id] {
            return Err(r.err(
                "sequence.id",
                format!("id {} repeated or out of range", e.id),
            ));
        }
        seen[e.id] = true;
    }
    Ok(DatasetManifest {
        scenario,
        config_digest,
        sequences,
    })
}

/// Load the sequences of one split, in manifest order.
pub fn load_split(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<GraphSequence>> {
    manifest
        .entries_in(split)
        .map(|e| load_sequence(&dir.join(&e.file)))
        .collect()
}
