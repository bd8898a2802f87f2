//! Which modules a model carries, derived from the training manifest, and
//! the frozen normalization statistics that go with them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::HdysConfig;
use crate::datahub::Dataset;
use crate::error::{HdysError, Result};
use crate::kinrep::{Channel, SequenceRecord};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub channel: Channel,
    pub tree: String,
    /// Token width for set channels, block width otherwise.
    pub width: usize,
}

impl Slot {
    pub fn key(&self) -> String {
        slot_key(self.channel, &self.tree)
    }
}

pub fn slot_key(c: Channel, tree: &str) -> String {
    format!("{}.{tree}", c.name())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub profiles: Vec<String>,
    pub kinematics: Vec<Slot>,
    pub dynamics: Vec<Slot>,
    /// FDAE acceleration targets; width is the predicted width.
    pub accel: Vec<Slot>,
}

fn push_unique(v: &mut Vec<Slot>, s: Slot) -> Result<()> {
    match v.iter().find(|o| o.channel == s.channel && o.tree == s.tree) {
        Some(o) if o.width != s.width => Err(HdysError::ChannelMismatch(format!(
            "{} on {} appears with widths {} and {}",
            s.channel, s.tree, o.width, s.width
        ))),
        Some(_) => Ok(()),
        None => {
            v.push(s);
            Ok(())
        }
    }
}

impl Layout {
    /// Modules for every channel of every sampled profile.
    pub fn from_dataset(ds: &Dataset, cfg: &HdysConfig) -> Result<Layout> {
        let mut layout = Layout::default();
        for p in ds.manifest.sampled_profiles() {
            let split = &ds.manifest.splits[&p.id];
            let Some(first) = split.train.first() else { continue };
            let rec = ds.get(first)?;
            layout.profiles.push(p.id.clone());
            for &c in &p.kinematics {
                let b = rec.block(c).ok_or_else(|| HdysError::ChannelMismatch(format!("{first} lacks {c}")))?;
                let width = if c.is_set() { 9 } else { b.width };
                push_unique(&mut layout.kinematics, Slot { channel: c, tree: p.tree.clone(), width })?;
                let predicts = matches!(c, Channel::Keypoints | Channel::Angles | Channel::Pose);
                if predicts && !p.dynamics.is_empty() && !cfg.ablation.no_fdae {
                    push_unique(&mut layout.accel, Slot {
                        channel: c,
                        tree: p.tree.clone(),
                        width: b.width / 3,
                    })?;
                }
            }
            for &c in &p.dynamics {
                let b = rec.block(c).ok_or_else(|| HdysError::ChannelMismatch(format!("{first} lacks {c}")))?;
                push_unique(&mut layout.dynamics, Slot { channel: c, tree: p.tree.clone(), width: b.width })?;
            }
        }
        if layout.kinematics.is_empty() {
            return Err(HdysError::DeadConfig("no sampled profile with training sequences".into()));
        }
        Ok(layout)
    }

    pub fn kinematics_slot(&self, c: Channel, tree: &str) -> Option<&Slot> {
        self.kinematics.iter().find(|s| s.channel == c && s.tree == tree)
    }

    pub fn dynamics_slot(&self, c: Channel, tree: &str) -> Option<&Slot> {
        self.dynamics.iter().find(|s| s.channel == c && s.tree == tree)
    }

    pub fn accel_slot(&self, c: Channel, tree: &str) -> Option<&Slot> {
        self.accel.iter().find(|s| s.channel == c && s.tree == tree)
    }
}

/// Per-column mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Moments {
    pub fn identity(width: usize) -> Self {
        Moments {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    fn from_rows<'a>(width: usize, rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        let rows: Vec<&[f64]> = rows.collect();
        for r in &rows {
            n += 1;
            for (s, v) in sum.iter_mut().zip(*r) {
                *s += v;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(*r).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let std = sq
            .iter()
            .map(|q| {
                let s = (q / n.max(1) as f64).sqrt();
                if s > 1e-8 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Moments { mean, std }
    }
}

/// Statistics keyed like [`Slot::key`], over the training split of the
/// sampled profiles.
pub fn compute_stats(ds: &Dataset, layout: &Layout) -> Result<BTreeMap<String, Moments>> {
    let mut out = BTreeMap::new();
    let train_records = |tree: &str, c: Channel| -> Result<Vec<&SequenceRecord>> {
        let mut v = Vec::new();
        for p in ds.manifest.sampled_profiles() {
            if p.tree != tree || !p.mask().has(c) {
                continue;
            }
            for id in &ds.manifest.splits[&p.id].train {
                v.push(ds.get(id)?);
            }
        }
        Ok(v)
    };
    for s in layout.kinematics.iter().chain(&layout.dynamics) {
        let recs = train_records(&s.tree, s.channel)?;
        let rows = recs
            .iter()
            .filter_map(|r| r.block(s.channel))
            .flat_map(|b| b.data.chunks(s.width));
        out.insert(s.key(), Moments::from_rows(s.width, rows));
    }
    Ok(out)
}
