//! Dataset manifest: profiles, train/test split ids, global seed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bodies::t1_emg_channels;
use super::motion::{MotionFamily, MotionRanges};
use super::profile::DomainProfile;
use crate::error::{HdysError, Result};
use crate::kinrep::Channel;
use crate::util::atomic_write;

pub const MANIFEST_SCHEMA: &str = "hdys-manifest/1";

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Whether the balanced sampler draws from this profile.
    #[serde(default = "yes")]
    pub sampled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    pub global_seed: u64,
    pub profiles: Vec<DomainProfile>,
    pub splits: BTreeMap<String, SplitIds>,
}

pub fn sequence_id(profile: &str, index: usize) -> String {
    format!("{profile}-{index:04}")
}

/// Parses `A-0007` into `("A", 7)`.
pub fn parse_sequence_id(id: &str) -> Option<(&str, usize)> {
    let (p, i) = id.rsplit_once('-')?;
    Some((p, i.parse().ok()?))
}

impl DatasetManifest {
    /// Splits each profile's sequences: indices `0..train_count` train, the
    /// rest test.
    pub fn new(global_seed: u64, profiles: Vec<DomainProfile>) -> Result<Self> {
        let splits = profiles
            .iter()
            .map(|p| {
                let ids = |r: std::ops::Range<usize>| r.map(|i| sequence_id(&p.id, i)).collect();
                let split = SplitIds {
                    train: ids(0..p.train_count),
                    test: ids(p.train_count..p.train_count + p.test_count),
                    sampled: true,
                };
                (p.id.clone(), split)
            })
            .collect();
        let m = DatasetManifest {
            schema: MANIFEST_SCHEMA.into(),
            global_seed,
            profiles,
            splits,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn default_desk(global_seed: u64) -> Self {
        Self::new(global_seed, default_profiles()).expect("default profiles are valid")
    }

    pub fn profile(&self, id: &str) -> Option<&DomainProfile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    pub fn split(&self, id: &str) -> Option<&SplitIds> {
        self.splits.get(id)
    }

    pub fn train_ids(&self) -> Vec<&str> {
        self.profiles
            .iter()
            .flat_map(|p| self.splits[&p.id].train.iter().map(String::as_str))
            .collect()
    }

    pub fn test_ids(&self) -> Vec<&str> {
        self.profiles
            .iter()
            .flat_map(|p| self.splits[&p.id].test.iter().map(String::as_str))
            .collect()
    }

    /// Profiles the sampler draws from.
    pub fn sampled_profiles(&self) -> Vec<&DomainProfile> {
        self.profiles.iter().filter(|p| self.splits[&p.id].sampled).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(HdysError::Version {
                expected: MANIFEST_SCHEMA.into(),
                found: self.schema.clone(),
            });
        }
        let mut seen_profiles = BTreeSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !seen_profiles.insert(p.id.as_str()) {
                return Err(HdysError::Invalid(format!("duplicate profile {}", p.id)));
            }
            let split = self
                .splits
                .get(&p.id)
                .ok_or_else(|| HdysError::Invalid(format!("profile {} has no split", p.id)))?;
            let mut ids = BTreeSet::new();
            for id in split.train.iter().chain(&split.test) {
                if !ids.insert(id.as_str()) {
                    return Err(HdysError::Invalid(format!("sequence {id} assigned twice")));
                }
                match parse_sequence_id(id) {
                    Some((pid, i)) if pid == p.id && i < p.train_count + p.test_count => {}
                    _ => return Err(HdysError::Invalid(format!("sequence {id} does not belong to {}", p.id))),
                }
            }
        }
        if let Some(extra) = self.splits.keys().find(|k| !seen_profiles.contains(k.as_str())) {
            return Err(HdysError::Invalid(format!("split for unknown profile {extra}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let found = v.get("schema").and_then(|s| s.as_str()).unwrap_or("");
        if found != MANIFEST_SCHEMA {
            return Err(HdysError::Version {
                expected: MANIFEST_SCHEMA.into(),
                found: found.into(),
            });
        }
        let m: DatasetManifest = serde_json::from_value(v)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn profile(
    id: &str,
    name: &str,
    tree: &str,
    kinematics: &[Channel],
    dynamics: &[Channel],
    motion: MotionFamily,
    amplitude: (f64, f64),
    frequency: (f64, f64),
) -> DomainProfile {
    DomainProfile {
        id: id.into(),
        name: name.into(),
        tree: tree.into(),
        kinematics: kinematics.to_vec(),
        dynamics: dynamics.to_vec(),
        motion,
        ranges: MotionRanges { amplitude, frequency },
        jitter_sigma: 0.0,
        train_count: 120,
        test_count: 30,
        fps: 90.0,
        duration_s: 3.0,
        markers: (20, 40),
        emg_channels: Vec::new(),
    }
}

/// The five desk-scale domains A to E.
pub fn default_profiles() -> Vec<DomainProfile> {
    use Channel::*;
    let mut b = profile(
        "B",
        "torque-sim",
        "T2",
        &[Markers, Keypoints, Pose],
        &[TauTs],
        MotionFamily::RandomSmooth,
        (0.5, 1.5),
        (0.2, 1.2),
    );
    b.jitter_sigma = 0.003;
    let mut d = profile(
        "D",
        "emg",
        "T1",
        &[Markers, Keypoints],
        &[TauE],
        MotionFamily::PeriodicGait,
        (0.8, 1.3),
        (0.4, 0.8),
    );
    d.emg_channels = t1_emg_channels();
    vec![
        profile(
            "A",
            "torque-lab",
            "T1",
            &[Markers, Keypoints, Angles],
            &[TauTr],
            MotionFamily::PeriodicGait,
            (0.6, 1.0),
            (0.8, 1.2),
        ),
        b,
        profile(
            "C",
            "muscle-sim",
            "T2",
            &[Markers, Keypoints, Pose],
            &[TauM],
            MotionFamily::ReachLike,
            (0.5, 1.0),
            (1.0, 2.0),
        ),
        d,
        profile(
            "E",
            "kin-only",
            "T2",
            &[Markers, Keypoints, Pose],
            &[],
            MotionFamily::RandomSmooth,
            (0.8, 1.6),
            (0.2, 1.5),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_manifest_splits() {
        let m = DatasetManifest::default_desk(7);
        assert_eq!(m.profiles.len(), 5);
        assert_eq!(m.train_ids().len(), 600);
        assert_eq!(m.test_ids().len(), 150);
        assert_eq!(m.splits["A"].train[7], "A-0007");
        assert_eq!(m.splits["A"].test[0], "A-0120");
        let back = DatasetManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn overlapping_split_rejected() {
        let mut m = DatasetManifest::default_desk(7);
        let dup = m.splits["A"].train[0].clone();
        m.splits.get_mut("A").unwrap().test.push(dup);
        assert!(m.validate().is_err());
    }

    #[test]
    fn wrong_schema_is_a_version_error() {
        let m = DatasetManifest::default_desk(1);
        let s = m.to_json().replace(MANIFEST_SCHEMA, "hdys-manifest/0");
        assert!(matches!(DatasetManifest::from_json(&s), Err(HdysError::Version { .. })));
    }
}
