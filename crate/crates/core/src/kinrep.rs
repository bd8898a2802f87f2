//! Kinematics and dynamics representations built from oracle trajectories.
//!
//! Kinematics blocks are frame-major. Marker and keypoint frames are rows of
//! `[position | velocity | acceleration]` (9 values each); angle and pose
//! frames are `[values | velocities | accelerations]` over the coordinates.
//! The acceleration-free views used by the forward-dynamics path are derived
//! on read.

use std::fmt;

use hdys_rbd::{forward_kinematics, muscle_to_torque, rnea, solve_activations, synth_emg, GeneralizedState, KinematicTree};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HdysError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Markers,
    Keypoints,
    Angles,
    Pose,
    TauTr,
    TauTs,
    TauM,
    TauE,
}

impl Channel {
    pub const ALL: [Channel; 8] = [
        Channel::Markers,
        Channel::Keypoints,
        Channel::Angles,
        Channel::Pose,
        Channel::TauTr,
        Channel::TauTs,
        Channel::TauM,
        Channel::TauE,
    ];
    pub const KINEMATICS: [Channel; 4] = [Channel::Markers, Channel::Keypoints, Channel::Angles, Channel::Pose];
    pub const DYNAMICS: [Channel; 4] = [Channel::TauTr, Channel::TauTs, Channel::TauM, Channel::TauE];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Markers => "x_m",
            Channel::Keypoints => "x_k",
            Channel::Angles => "x_a",
            Channel::Pose => "x_s",
            Channel::TauTr => "tau_tr",
            Channel::TauTs => "tau_ts",
            Channel::TauM => "tau_m",
            Channel::TauE => "tau_e",
        }
    }

    pub fn parse(s: &str) -> Result<Channel> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| HdysError::Invalid(format!("unknown channel `{s}`")))
    }

    pub fn is_kinematics(self) -> bool {
        self.index() < 4
    }

    /// Markers and keypoints are variable-size sets of 9-dim rows.
    pub fn is_set(self) -> bool {
        matches!(self, Channel::Markers | Channel::Keypoints)
    }

    /// Joint torques (as opposed to muscle actions or sEMG).
    pub fn is_torque(self) -> bool {
        matches!(self, Channel::TauTr | Channel::TauTs)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Availability bitmask over the eight channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelMask(pub u8);

impl ChannelMask {
    pub fn of(channels: &[Channel]) -> Self {
        ChannelMask(channels.iter().fold(0, |m, c| m | (1 << c.index())))
    }

    pub fn has(self, c: Channel) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn with(self, c: Channel) -> Self {
        ChannelMask(self.0 | (1 << c.index()))
    }

    pub fn without(self, c: Channel) -> Self {
        ChannelMask(self.0 & !(1 << c.index()))
    }

    pub fn and(self, o: ChannelMask) -> Self {
        ChannelMask(self.0 & o.0)
    }

    pub fn channels(self) -> Vec<Channel> {
        Channel::ALL.into_iter().filter(|c| self.has(*c)).collect()
    }

    pub fn kinematics(self) -> Vec<Channel> {
        Channel::KINEMATICS.into_iter().filter(|c| self.has(*c)).collect()
    }

    pub fn dynamics(self) -> Vec<Channel> {
        Channel::DYNAMICS.into_iter().filter(|c| self.has(*c)).collect()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn names(self) -> Vec<&'static str> {
        self.channels().into_iter().map(Channel::name).collect()
    }
}

/// Frame-major `frames × width` storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub width: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn new(width: usize, data: Vec<f64>) -> Self {
        debug_assert!(width > 0 && data.len() % width == 0);
        Block { width, data }
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }
}

/// Oracle generalized trajectory, frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub q: Block,
    pub qd: Block,
    pub qdd: Block,
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        self.q.frames()
    }

    pub fn dof(&self) -> usize {
        self.q.width
    }

    pub fn state(&self, t: usize) -> GeneralizedState {
        GeneralizedState::new(self.q.frame(t).to_vec(), self.qd.frame(t).to_vec(), self.qdd.frame(t).to_vec())
    }
}

/// One time-stamped frame viewed out of a [`SequenceRecord`].
#[derive(Clone, Debug)]
pub struct FrameSample<'a> {
    pub time_index: usize,
    pub fps: f64,
    pub subject_mass: f64,
    pub boundary: bool,
    pub mask: ChannelMask,
    channels: [Option<&'a [f64]>; 8],
}

impl<'a> FrameSample<'a> {
    pub fn get(&self, c: Channel) -> Option<&'a [f64]> {
        self.channels[c.index()]
    }

    /// Kinematics block with accelerations removed.
    pub fn accel_free(&self, c: Channel) -> Option<Vec<f64>> {
        self.get(c).map(|v| drop_accelerations(c, v))
    }
}

/// Strips the acceleration third of one frame of a kinematics block.
pub fn drop_accelerations(c: Channel, frame: &[f64]) -> Vec<f64> {
    if c.is_set() {
        frame.chunks(9).flat_map(|row| row[..6].iter().copied()).collect()
    } else {
        frame[..frame.len() / 3 * 2].to_vec()
    }
}

/// Acceleration components of one frame of a kinematics block.
pub fn accelerations(c: Channel, frame: &[f64]) -> Vec<f64> {
    if c.is_set() {
        frame.chunks(9).flat_map(|row| row[6..].iter().copied()).collect()
    } else {
        frame[frame.len() / 3 * 2..].to_vec()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub profile: String,
    pub tree: String,
    pub fps: f64,
    pub subject_mass: f64,
    /// Tree marker-site indices backing the marker rows, in row order.
    pub marker_sites: Vec<u32>,
    pub blocks: [Option<Block>; 8],
    pub oracle: Option<Trajectory>,
}

impl SequenceRecord {
    pub fn frames(&self) -> usize {
        self.blocks
            .iter()
            .flatten()
            .map(Block::frames)
            .next()
            .or_else(|| self.oracle.as_ref().map(Trajectory::frames))
            .unwrap_or(0)
    }

    pub fn mask(&self) -> ChannelMask {
        ChannelMask(
            self.blocks
                .iter()
                .enumerate()
                .filter(|(_, b)| b.is_some())
                .fold(0, |m, (i, _)| m | (1 << i)),
        )
    }

    pub fn block(&self, c: Channel) -> Option<&Block> {
        self.blocks[c.index()].as_ref()
    }

    /// First and last frames use one-sided difference stencils.
    pub fn is_boundary(&self, t: usize) -> bool {
        t == 0 || t + 1 >= self.frames()
    }

    pub fn frame(&self, t: usize) -> FrameSample<'_> {
        let mut channels = [None; 8];
        for c in Channel::ALL {
            channels[c.index()] = self.block(c).map(|b| b.frame(t));
        }
        FrameSample {
            time_index: t,
            fps: self.fps,
            subject_mass: self.subject_mass,
            boundary: self.is_boundary(t),
            mask: self.mask(),
            channels,
        }
    }

    /// Number of marker rows (0 when markers are absent).
    pub fn marker_rows(&self) -> usize {
        self.block(Channel::Markers).map_or(0, |b| b.width / 9)
    }

    /// Checks every frame-level invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HdysError::InvalidRecord(format!("{}: {m}", self.id)));
        let n = self.frames();
        if n < 3 {
            return bad(format!("{n} frames, need at least 3"));
        }
        if !(self.fps > 0.0) || !(self.subject_mass > 0.0) {
            return bad("fps and subject mass must be positive".into());
        }
        for c in Channel::ALL {
            let Some(b) = self.block(c) else { continue };
            if b.width == 0 || b.data.len() != n * b.width {
                return bad(format!("{c} has {} values for {n} frames of width {}", b.data.len(), b.width));
            }
            if c.is_set() && b.width % 9 != 0 {
                return bad(format!("{c} width {} is not a multiple of 9", b.width));
            }
            if matches!(c, Channel::Angles | Channel::Pose) && b.width % 3 != 0 {
                return bad(format!("{c} width {} is not a multiple of 3", b.width));
            }
            if b.data.iter().any(|v| !v.is_finite()) {
                return bad(format!("{c} has non-finite values"));
            }
            if c == Channel::TauM && b.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad("muscle actions outside [0, 1]".into());
            }
            if c == Channel::TauE && b.data.iter().any(|v| *v < 0.0) {
                return bad("negative sEMG".into());
            }
        }
        if self.marker_sites.len() != self.marker_rows() {
            return bad("marker site list does not match marker rows".into());
        }
        if let Some(o) = &self.oracle {
            if o.frames() != n || o.qd.width != o.dof() || o.qdd.width != o.dof() {
                return bad("oracle trajectory shape mismatch".into());
            }
            if [&o.q, &o.qd, &o.qdd].iter().any(|b| b.data.iter().any(|v| !v.is_finite())) {
                return bad("oracle trajectory has non-finite values".into());
            }
        }
        Ok(())
    }
}

/// Central differences at interior frames, first-order one-sided at the ends.
/// `x` is frame-major with `width` values per frame.
pub fn finite_difference(x: &[f64], width: usize, fps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if width == 0 || x.len() % width != 0 {
        return Err(HdysError::Invalid(format!("{} values do not tile width {width}", x.len())));
    }
    let n = x.len() / width;
    if n < 3 {
        return Err(HdysError::Invalid(format!("finite differencing needs >= 3 frames, got {n}")));
    }
    let at = |t: usize, j: usize| x[t * width + j];
    let mut vel = vec![0.0; x.len()];
    let mut acc = vec![0.0; x.len()];
    let fps2 = fps * fps;
    for t in 0..n {
        for j in 0..width {
            let (v, a) = if t == 0 {
                ((at(1, j) - at(0, j)) * fps, (at(2, j) - 2.0 * at(1, j) + at(0, j)) * fps2)
            } else if t == n - 1 {
                (
                    (at(t, j) - at(t - 1, j)) * fps,
                    (at(t, j) - 2.0 * at(t - 1, j) + at(t - 2, j)) * fps2,
                )
            } else {
                (
                    (at(t + 1, j) - at(t - 1, j)) * fps / 2.0,
                    (at(t + 1, j) - 2.0 * at(t, j) + at(t - 1, j)) * fps2,
                )
            };
            vel[t * width + j] = v;
            acc[t * width + j] = a;
        }
    }
    Ok((vel, acc))
}

/// Gaussian position jitter applied to Cartesian channels before differencing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub sigma: f64,
    pub seed: u64,
}

fn point_block(points: &[f64], rows: usize, fps: f64) -> Result<Block> {
    let (vel, acc) = finite_difference(points, rows * 3, fps)?;
    let frames = points.len() / (rows * 3);
    let mut data = Vec::with_capacity(frames * rows * 9);
    for t in 0..frames {
        for r in 0..rows {
            let k = t * rows * 3 + r * 3;
            data.extend_from_slice(&points[k..k + 3]);
            data.extend_from_slice(&vel[k..k + 3]);
            data.extend_from_slice(&acc[k..k + 3]);
        }
    }
    Ok(Block::new(rows * 9, data))
}

fn coordinate_block(q: &Block, fps: f64) -> Result<Block> {
    let (vel, acc) = finite_difference(&q.data, q.width, fps)?;
    let mut data = Vec::with_capacity(q.data.len() * 3);
    for t in 0..q.frames() {
        let s = t * q.width..(t + 1) * q.width;
        data.extend_from_slice(&q.data[s.clone()]);
        data.extend_from_slice(&vel[s.clone()]);
        data.extend_from_slice(&acc[s]);
    }
    Ok(Block::new(q.width * 3, data))
}

pub struct RecordMeta<'a> {
    pub id: &'a str,
    pub profile: &'a str,
    pub tree: &'a str,
}

/// Kinematics channels of `mask` computed from an oracle trajectory.
#[allow(clippy::too_many_arguments)]
pub fn build_representations(
    meta: RecordMeta<'_>,
    tree: &KinematicTree,
    traj: &Trajectory,
    marker_subset: &[usize],
    mask: ChannelMask,
    fps: f64,
    jitter: Option<Jitter>,
) -> Result<SequenceRecord> {
    let n = traj.frames();
    if traj.dof() != tree.dof_count() {
        return Err(HdysError::Invalid(format!(
            "trajectory has {} coordinates, tree has {}",
            traj.dof(),
            tree.dof_count()
        )));
    }
    if mask.has(Channel::Markers) {
        if marker_subset.is_empty() {
            return Err(HdysError::Invalid("empty marker subset".into()));
        }
        if let Some(&bad) = marker_subset.iter().find(|&&m| m >= tree.markers().len()) {
            return Err(HdysError::Invalid(format!(
                "marker {bad} out of range ({} sites)",
                tree.markers().len()
            )));
        }
    }
    let want_points = mask.has(Channel::Markers) || mask.has(Channel::Keypoints);
    let n_links = tree.links().len();
    let mut markers = Vec::new();
    let mut keypoints = Vec::new();
    if want_points {
        markers.reserve(n * marker_subset.len() * 3);
        keypoints.reserve(n * n_links * 3);
        for t in 0..n {
            let fk = forward_kinematics(tree, traj.q.frame(t))?;
            for &m in marker_subset {
                markers.extend_from_slice(fk.markers[m].as_slice());
            }
            for p in &fk.joint_positions {
                keypoints.extend_from_slice(p.as_slice());
            }
        }
        if let Some(j) = jitter.filter(|j| j.sigma > 0.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(j.seed);
            let noise = Normal::new(0.0, j.sigma).map_err(|e| HdysError::Invalid(e.to_string()))?;
            for v in markers.iter_mut().chain(keypoints.iter_mut()) {
                *v += noise.sample(&mut rng);
            }
        }
    }
    let mut blocks: [Option<Block>; 8] = Default::default();
    if mask.has(Channel::Markers) {
        blocks[Channel::Markers.index()] = Some(point_block(&markers, marker_subset.len(), fps)?);
    }
    if mask.has(Channel::Keypoints) {
        blocks[Channel::Keypoints.index()] = Some(point_block(&keypoints, n_links, fps)?);
    }
    for c in [Channel::Angles, Channel::Pose] {
        if mask.has(c) {
            blocks[c.index()] = Some(coordinate_block(&traj.q, fps)?);
        }
    }
    Ok(SequenceRecord {
        id: meta.id.to_string(),
        profile: meta.profile.to_string(),
        tree: meta.tree.to_string(),
        fps,
        subject_mass: tree.total_mass(),
        marker_sites: if mask.has(Channel::Markers) {
            marker_subset.iter().map(|&m| m as u32).collect()
        } else {
            Vec::new()
        },
        blocks,
        oracle: Some(traj.clone()),
    })
}

/// Which dynamics labels to attach.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DynamicsRequest {
    pub kinds: ChannelMask,
    /// Muscle indices recorded as sEMG channels.
    pub emg_channels: Vec<usize>,
}

/// Attaches oracle dynamics labels at the record's exact oracle states.
pub fn attach_dynamics(
    mut record: SequenceRecord,
    tree: &KinematicTree,
    request: &DynamicsRequest,
    seed: u64,
) -> Result<SequenceRecord> {
    let kinds = request.kinds;
    if !kinds.kinematics().is_empty() {
        return Err(HdysError::Invalid("dynamics request names kinematics channels".into()));
    }
    if kinds.is_empty() {
        return Ok(record);
    }
    let traj = record
        .oracle
        .as_ref()
        .ok_or_else(|| HdysError::Invalid("record has no oracle trajectory".into()))?;
    let n = traj.frames();
    let root = tree.root_dof();
    let mut tau = Vec::with_capacity(n * tree.actuated_dof());
    for t in 0..n {
        let full = rnea(tree, &traj.state(t), &[]).map_err(|source| HdysError::AtFrame { frame: t, source })?;
        tau.extend_from_slice(&full[root..]);
    }
    let width = tree.actuated_dof();
    for c in [Channel::TauTr, Channel::TauTs] {
        if kinds.has(c) {
            record.blocks[c.index()] = Some(Block::new(width, tau.clone()));
        }
    }
    if kinds.has(Channel::TauM) || kinds.has(Channel::TauE) {
        let ms = tree
            .muscles()
            .ok_or_else(|| HdysError::Invalid(format!("tree {} has no muscle set", record.tree)))?;
        let mut acts = Vec::with_capacity(n);
        for t in 0..n {
            let a = solve_activations(ms, &tau[t * width..(t + 1) * width])
                .map_err(|source| HdysError::AtFrame { frame: t, source })?;
            acts.push(a);
        }
        if kinds.has(Channel::TauM) {
            record.blocks[Channel::TauM.index()] = Some(Block::new(ms.len(), acts.concat()));
        }
        if kinds.has(Channel::TauE) {
            if request.emg_channels.is_empty() || request.emg_channels.iter().any(|&c| c >= ms.len()) {
                return Err(HdysError::Invalid("invalid sEMG channel selection".into()));
            }
            let picked: Vec<Vec<f64>> = acts
                .iter()
                .map(|a| request.emg_channels.iter().map(|&c| a[c]).collect())
                .collect();
            let emg = synth_emg(&picked, record.fps, Some(seed));
            record.blocks[Channel::TauE.index()] = Some(Block::new(request.emg_channels.len(), emg.concat()));
        }
    }
    Ok(record)
}

/// Replays stored muscle actions through the muscle model.
pub fn replay_muscle_torques(record: &SequenceRecord, tree: &KinematicTree) -> Result<Vec<Vec<f64>>> {
    let ms = tree
        .muscles()
        .ok_or_else(|| HdysError::Invalid("tree has no muscle set".into()))?;
    let b = record
        .block(Channel::TauM)
        .ok_or_else(|| HdysError::Invalid("record has no muscle actions".into()))?;
    (0..b.frames())
        .map(|t| muscle_to_torque(ms, b.frame(t)).map_err(HdysError::from))
        .collect()
}
