use serde::{Deserialize, Serialize};

use super::motion::{MotionFamily, MotionRanges};
use crate::error::{HdysError, Result};
use crate::kinrep::{Channel, ChannelMask};

/// A synthetic domain: which tree, which channels, what motion and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub id: String,
    pub name: String,
    pub tree: String,
    pub kinematics: Vec<Channel>,
    pub dynamics: Vec<Channel>,
    pub motion: MotionFamily,
    pub ranges: MotionRanges,
    /// Position jitter σ (m) on Cartesian channels before differencing.
    pub jitter_sigma: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub fps: f64,
    pub duration_s: f64,
    /// Inclusive range of marker-subset sizes drawn per sequence.
    pub markers: (usize, usize),
    /// Muscle indices recorded as sEMG.
    #[serde(default)]
    pub emg_channels: Vec<usize>,
}

impl DomainProfile {
    pub fn mask(&self) -> ChannelMask {
        let mut all = self.kinematics.clone();
        all.extend_from_slice(&self.dynamics);
        ChannelMask::of(&all)
    }

    pub fn frames(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HdysError::Invalid(format!("profile {}: {m}", self.id)));
        if self.kinematics.is_empty() {
            return bad("no kinematics channel".into());
        }
        if self.kinematics.iter().any(|c| !c.is_kinematics()) || self.dynamics.iter().any(|c| c.is_kinematics()) {
            return bad("channel listed under the wrong group".into());
        }
        if !(self.jitter_sigma >= 0.0) {
            return bad("negative jitter".into());
        }
        if self.frames() < 3 || !(self.fps > 0.0) {
            return bad("needs at least 3 frames".into());
        }
        if self.kinematics.contains(&Channel::Markers) && (self.markers.0 == 0 || self.markers.0 > self.markers.1) {
            return bad("invalid marker subset range".into());
        }
        if self.dynamics.contains(&Channel::TauE) && self.emg_channels.is_empty() {
            return bad("sEMG requested without channels".into());
        }
        Ok(())
    }
}
