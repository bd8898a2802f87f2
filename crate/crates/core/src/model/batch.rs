//! Normalized window batches for one profile group.
//!
//! Rows are window-major: row `i * window + t` is frame `start_i + t` of
//! window `i`.

use hdys_numcore::Tensor;

use super::layout::Moments;
use super::Model;
use crate::error::{HdysError, Result};
use crate::kinrep::{Channel, SequenceRecord};

#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    pub rec: &'a SequenceRecord,
    pub start: usize,
}

/// Windows whose sets share a token count, encoded in one pass.
#[derive(Clone, Debug)]
pub struct SetChunk {
    pub windows: Vec<usize>,
    pub per_frame: usize,
    /// `[windows.len() * window * per_frame, 9]`
    pub tokens: Tensor,
}

#[derive(Clone, Debug)]
pub enum KinInput {
    Set(Vec<SetChunk>),
    /// `[windows * window, width]`
    Vector(Tensor),
}

#[derive(Clone, Debug)]
pub struct GroupBatch {
    pub profile: String,
    pub tree: String,
    pub windows: usize,
    pub window: usize,
    pub kin: Vec<(Channel, KinInput)>,
    pub dyn_kind: Option<Channel>,
    /// Normalized dynamics labels, `[rows, width]`.
    pub dyn_target: Option<Tensor>,
    /// Normalized acceleration targets of the kinematics channels the
    /// FDAE predicts.
    pub accel: Vec<(Channel, Tensor)>,
    /// Rows that count towards the reconstruction loss.
    pub valid_rows: Vec<usize>,
}

impl GroupBatch {
    pub fn rows(&self) -> usize {
        self.windows * self.window
    }
}

fn normalize(v: f64, m: &Moments, col: usize) -> f64 {
    (v - m.mean[col]) / m.std[col]
}

/// Builds a batch from windows of one profile. Normalization statistics come
/// from the model; channels the model has no slot for are an error.
pub fn build_group(model: &Model, windows: &[Window], exclude_boundary: bool) -> Result<GroupBatch> {
    let first = windows.first().ok_or_else(|| HdysError::Invalid("empty window group".into()))?.rec;
    let w = model.cfg.model.window;
    let (profile, tree) = (first.profile.clone(), first.tree.clone());
    for win in windows {
        if win.rec.profile != profile || win.rec.mask() != first.mask() {
            return Err(HdysError::Invalid("window group mixes availability patterns".into()));
        }
        if win.start + w > win.rec.frames() {
            return Err(HdysError::Invalid(format!("window at {} overruns {}", win.start, win.rec.id)));
        }
    }
    let rows = windows.len() * w;
    let mask = first.mask();
    let mut kin = Vec::new();
    let mut accel = Vec::new();
    for c in mask.kinematics() {
        let stats = model.stats(c, &tree)?;
        if c.is_set() {
            let mut chunks: Vec<SetChunk> = Vec::new();
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for (i, win) in windows.iter().enumerate() {
                let per = win.rec.block(c).expect("mask checked").width / 9;
                match groups.iter_mut().find(|(p, _)| *p == per) {
                    Some((_, v)) => v.push(i),
                    None => groups.push((per, vec![i])),
                }
            }
            for (per, idx) in groups {
                let mut data = Vec::with_capacity(idx.len() * w * per * 9);
                for &i in &idx {
                    let b = windows[i].rec.block(c).expect("mask checked");
                    for t in windows[i].start..windows[i].start + w {
                        for (k, v) in b.frame(t).iter().enumerate() {
                            data.push(normalize(*v, stats, k % 9));
                        }
                    }
                }
                chunks.push(SetChunk {
                    tokens: Tensor::matrix(idx.len() * w * per, 9, data),
                    windows: idx,
                    per_frame: per,
                });
            }
            kin.push((c, KinInput::Set(chunks)));
        } else {
            let width = first.block(c).expect("mask checked").width;
            let mut data = Vec::with_capacity(rows * width);
            for win in windows {
                let b = win.rec.block(c).expect("mask checked");
                for t in win.start..win.start + w {
                    data.extend(b.frame(t).iter().enumerate().map(|(k, v)| normalize(*v, stats, k)));
                }
            }
            kin.push((c, KinInput::Vector(Tensor::matrix(rows, width, data))));
        }
        if model.layout.accel_slot(c, &tree).is_some() {
            let acc_cols = |width: usize| -> Vec<usize> {
                if c.is_set() {
                    (0..width).filter(|k| k % 9 >= 6).collect()
                } else {
                    (width / 3 * 2..width).collect()
                }
            };
            let width = first.block(c).expect("mask checked").width;
            let cols = acc_cols(width);
            let mut data = Vec::with_capacity(rows * cols.len());
            for win in windows {
                let b = win.rec.block(c).expect("mask checked");
                for t in win.start..win.start + w {
                    let f = b.frame(t);
                    let stat_col = |k: usize| if c.is_set() { k % 9 } else { k };
                    data.extend(cols.iter().map(|&k| normalize(f[k], stats, stat_col(k))));
                }
            }
            accel.push((c, Tensor::matrix(rows, cols.len(), data)));
        }
    }
    let dyn_kinds = mask.dynamics();
    if dyn_kinds.len() > 1 {
        return Err(HdysError::Invalid("more than one dynamics block per frame is unsupported".into()));
    }
    let dyn_kind = dyn_kinds.first().copied();
    let dyn_target = match dyn_kind {
        Some(c) => {
            let stats = model.stats(c, &tree)?;
            let width = first.block(c).expect("mask checked").width;
            let mut data = Vec::with_capacity(rows * width);
            for win in windows {
                let b = win.rec.block(c).expect("mask checked");
                for t in win.start..win.start + w {
                    data.extend(b.frame(t).iter().enumerate().map(|(k, v)| normalize(*v, stats, k)));
                }
            }
            Some(Tensor::matrix(rows, width, data))
        }
        None => None,
    };
    let valid_rows = windows
        .iter()
        .enumerate()
        .flat_map(|(i, win)| {
            (0..w)
                .filter(move |&t| !(exclude_boundary && win.rec.is_boundary(win.start + t)))
                .map(move |t| i * w + t)
        })
        .collect();
    Ok(GroupBatch {
        profile,
        tree,
        windows: windows.len(),
        window: w,
        kin,
        dyn_kind,
        dyn_target,
        accel,
        valid_rows,
    })
}
