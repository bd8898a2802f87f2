//! k-step torque rollouts through the rigid-body integrator.
//!
//! The reference state at frame `s` is `(q_s, (q_s - q_{s-1}) / dt)`. Under
//! semi-implicit Euler the torques that reproduce the sampled trajectory
//! exactly are `rnea(q_t, v_t, (q_{t+1} - 2 q_t + q_{t-1}) / dt²)`; those are
//! the oracle torques.

use hdys_rbd::{rnea, step, GeneralizedState, KinematicTree, RbdError};
use serde::{Deserialize, Serialize};

use super::eval::predict_sequence;
use crate::datahub::{generate_sequence, parse_sequence_id, resolve_body, Dataset};
use crate::error::{HdysError, Result};
use crate::kinrep::SequenceRecord;
use crate::model::Model;
use crate::util::sha256_hex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TorqueSource {
    Predicted,
    Oracle,
}

impl TorqueSource {
    pub fn name(self) -> &'static str {
        match self {
            TorqueSource::Predicted => "predicted",
            TorqueSource::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutCell {
    pub source: TorqueSource,
    pub fps: f64,
    pub k: usize,
    /// Mean over starts of the per-frame joint-angle MSE.
    pub mse: f64,
    /// Largest single-start MSE.
    pub max_mse: f64,
    pub starts: usize,
    pub diverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub profile: String,
    pub ks: Vec<usize>,
    pub fps: Vec<f64>,
    pub sequences: usize,
    pub checkpoint: String,
    pub config_hash: String,
    pub cells: Vec<RolloutCell>,
}

impl RolloutReport {
    pub fn cell(&self, source: TorqueSource, fps: f64, k: usize) -> Option<&RolloutCell> {
        self.cells.iter().find(|c| c.source == source && c.fps == fps && c.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,fps,k,mse,max_mse,starts,diverged\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{:.9e},{:.9e},{},{}\n",
                c.source.name(),
                c.fps,
                c.k,
                c.mse,
                c.max_mse,
                c.starts,
                c.diverged
            ));
        }
        s
    }
}

/// Discrete-consistent oracle torques for frames `1..n-1` (index `t` holds
/// frame `t`; the first and last entries are unused and left empty).
pub fn oracle_torques(tree: &KinematicTree, q: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
    let n = q.len();
    let mut out = vec![Vec::new(); n];
    for t in 1..n.saturating_sub(1) {
        let v: Vec<f64> = q[t].iter().zip(&q[t - 1]).map(|(a, b)| (a - b) / dt).collect();
        let a: Vec<f64> = (0..q[t].len())
            .map(|i| (q[t + 1][i] - 2.0 * q[t][i] + q[t - 1][i]) / (dt * dt))
            .collect();
        let state = GeneralizedState::new(q[t].clone(), v, a);
        out[t] = rnea(tree, &state, &[]).map_err(|source| HdysError::AtFrame { frame: t, source })?;
    }
    Ok(out)
}

/// Steps `k` frames from frame `s` and returns the per-frame MSE of joint
/// angles against the reference, or `None` on divergence.
pub fn rollout_mse(tree: &KinematicTree, q: &[Vec<f64>], taus: &[Vec<f64>], s: usize, k: usize, dt: f64) -> Result<Option<f64>> {
    let mut qc = q[s].clone();
    let mut vc: Vec<f64> = q[s].iter().zip(&q[s - 1]).map(|(a, b)| (a - b) / dt).collect();
    let mut acc = 0.0;
    for j in 0..k {
        match step(tree, &qc, &vc, &taus[s + j], &[], dt) {
            Ok((q1, v1)) => {
                qc = q1;
                vc = v1;
            }
            Err(RbdError::Diverged { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let r = &q[s + j + 1];
        acc += qc.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / r.len() as f64;
    }
    Ok(Some(acc / k as f64))
}

fn frames_of(rec: &SequenceRecord) -> Result<Vec<Vec<f64>>> {
    let traj = rec
        .oracle
        .as_ref()
        .ok_or_else(|| HdysError::Invalid(format!("{} has no oracle trajectory", rec.id)))?;
    Ok((0..traj.frames()).map(|t| traj.q.frame(t).to_vec()).collect())
}

/// Rollouts for the configured profile at every `(fps, k)`, with predicted
/// and oracle torques. Test sequences are regenerated at each rate.
pub fn rollout_eval(model: &Model, ds: &Dataset, ks: &[usize], fps_list: &[f64]) -> Result<RolloutReport> {
    let rc = &model.cfg.rollout;
    let profile = ds
        .manifest
        .profile(&rc.profile)
        .ok_or_else(|| HdysError::Invalid(format!("unknown rollout profile `{}`", rc.profile)))?;
    let Some(&kind) = profile.dynamics.first().filter(|c| c.is_torque()) else {
        return Err(HdysError::Invalid(format!("profile {} has no joint-torque labels", profile.id)));
    };
    if !model.supports(&profile.kinematics, &profile.dynamics, &profile.tree) {
        return Err(HdysError::ChannelMismatch(format!("checkpoint cannot predict profile {}", profile.id)));
    }
    let body = resolve_body(&profile.tree)?;
    let tree = &body.tree;
    if tree.root_dof() != 0 {
        return Err(HdysError::Invalid("rollouts need a fixed-base tree".into()));
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    if kmax == 0 || ks.contains(&0) {
        return Err(HdysError::Invalid("rollout horizons must be positive".into()));
    }
    let mut ids = ds.manifest.splits[&profile.id].test.clone();
    if rc.sequences > 0 {
        ids.truncate(rc.sequences);
    }
    let mut cells = Vec::new();
    for &fps in fps_list {
        if !(fps > 0.0) {
            return Err(HdysError::Invalid(format!("invalid rollout fps {fps}")));
        }
        let mut prof = profile.clone();
        prof.fps = fps;
        let dt = 1.0 / fps;
        // [source][k] -> (sum, max, count, diverged)
        let mut acc = vec![vec![(0.0f64, 0.0f64, 0usize, 0usize); ks.len()]; 2];
        for id in &ids {
            let (_, index) = parse_sequence_id(id).ok_or_else(|| HdysError::Invalid(format!("bad id {id}")))?;
            let rec = if fps == profile.fps {
                ds.get(id)?.clone()
            } else {
                generate_sequence(&prof, &body, ds.manifest.global_seed, index)?
            };
            let q = frames_of(&rec)?;
            let oracle = oracle_torques(tree, &q, dt)?;
            let pred = predict_sequence(model, &rec, model.cfg.eval.stride, false)?;
            debug_assert_eq!(pred.width, rec.block(kind).expect("mask").width);
            let avg = pred.averaged();
            let predicted: Vec<Vec<f64>> = avg.chunks(pred.width).map(<[f64]>::to_vec).collect();
            let n = q.len();
            let stride = rc.start_stride.max(1);
            for s in (1..n.saturating_sub(kmax)).step_by(stride) {
                for (si, taus) in [&predicted, &oracle].into_iter().enumerate() {
                    for (ki, &k) in ks.iter().enumerate() {
                        let cell = &mut acc[si][ki];
                        match rollout_mse(tree, &q, taus, s, k, dt)? {
                            Some(m) => {
                                cell.0 += m;
                                cell.1 = cell.1.max(m);
                                cell.2 += 1;
                            }
                            None => cell.3 += 1,
                        }
                    }
                }
            }
        }
        for (si, source) in [TorqueSource::Predicted, TorqueSource::Oracle].into_iter().enumerate() {
            for (ki, &k) in ks.iter().enumerate() {
                let (sum, max, count, diverged) = acc[si][ki];
                cells.push(RolloutCell {
                    source,
                    fps,
                    k,
                    mse: if count > 0 { sum / count as f64 } else { f64::NAN },
                    max_mse: max,
                    starts: count,
                    diverged,
                });
            }
        }
    }
    Ok(RolloutReport {
        profile: profile.id.clone(),
        ks: ks.to_vec(),
        fps: fps_list.to_vec(),
        sequences: ids.len(),
        checkpoint: sha256_hex(&model.checkpoint().encode()),
        config_hash: model.cfg.hash(),
        cells,
    })
}
