//! Balanced-sampling training loop.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use hdys_numcore::{accumulate_grads, clip_grad_norm, AdamWConfig, AdamWState, Binder, Graph, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{HdysConfig, LrSchedule};
use crate::datahub::{balanced_epoch_sampler, Dataset, DatasetManifest};
use crate::error::{HdysError, Result};
use crate::model::losses::group_loss;
use crate::model::nn::Ctx;
use crate::model::{build_group, Model, Window};
use crate::util::mix_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Frame-weighted mean over groups that have a reconstruction term.
    pub recon: f64,
    /// Frame-weighted mean over groups that have an alignment term.
    pub align: f64,
    pub total: f64,
    pub batches: usize,
}

pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<EpochLoss>,
    pub elapsed: Duration,
}

/// Restricts sampling to `profiles` (all when empty). Test splits are kept.
pub fn restrict_profiles(manifest: &DatasetManifest, profiles: &[String]) -> Result<DatasetManifest> {
    if profiles.is_empty() {
        return Ok(manifest.clone());
    }
    let mut m = manifest.clone();
    for p in profiles {
        if m.profile(p).is_none() {
            return Err(HdysError::Config {
                key: "data.profiles".into(),
                msg: format!("unknown profile `{p}`"),
            });
        }
    }
    for (id, split) in m.splits.iter_mut() {
        if !profiles.contains(id) {
            split.sampled = false;
            split.train.clear();
        }
    }
    Ok(m)
}

/// One window per sampled sequence at a seeded start, interleaved across
/// profiles so every batch mixes them.
fn epoch_windows<'a>(ds: &'a Dataset, cfg: &HdysConfig, epoch: usize) -> Result<Vec<Window<'a>>> {
    let ids = balanced_epoch_sampler(&ds.manifest, cfg.train.quota, cfg.train.seed, epoch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(cfg.train.seed, epoch as u64), 0x77696e));
    let w = cfg.model.window;
    let mut per_profile: BTreeMap<&str, Vec<Window>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for id in &ids {
        let rec = ds.get(id)?;
        if rec.frames() < w {
            return Err(HdysError::Invalid(format!("{id} is shorter than one window")));
        }
        let start = rng.gen_range(0..=rec.frames() - w);
        if !per_profile.contains_key(rec.profile.as_str()) {
            order.push(rec.profile.as_str());
        }
        per_profile.entry(rec.profile.as_str()).or_default().push(Window { rec, start });
    }
    for v in per_profile.values_mut() {
        v.shuffle(&mut rng);
    }
    let longest = per_profile.values().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(ids.len());
    for i in 0..longest {
        for p in &order {
            if let Some(w) = per_profile[p].get(i) {
                out.push(*w);
            }
        }
    }
    Ok(out)
}

fn lr_at(cfg: &HdysConfig, epoch: usize) -> f64 {
    match cfg.train.lr_schedule {
        LrSchedule::Constant => cfg.train.lr,
        LrSchedule::Cosine => 0.5 * cfg.train.lr * (1.0 + (PI * epoch as f64 / cfg.train.epochs.max(1) as f64).cos()),
    }
}

/// Accumulated loss statistics of one batch.
#[derive(Default)]
struct Tally {
    recon: (f64, f64),
    align: (f64, f64),
    total: (f64, f64),
}

/// Forward and backward over one batch, one graph per profile group.
/// Returns the store-indexed gradients.
fn batch_step(model: &Model, windows: &[Window], ctx: &mut Ctx, tally: &mut Tally, epoch: usize, batch: usize) -> Result<Vec<Option<Tensor>>> {
    let mut groups: Vec<(String, Vec<Window>)> = Vec::new();
    for w in windows {
        match groups.iter_mut().find(|(p, _)| *p == w.rec.profile) {
            Some((_, v)) => v.push(*w),
            None => groups.push((w.rec.profile.clone(), vec![*w])),
        }
    }
    let frames: usize = windows.len() * model.cfg.model.window;
    let mut acc: Vec<Option<Tensor>> = vec![None; model.store.len()];
    let mut live = 0;
    for (_, ws) in &groups {
        let gb = build_group(model, ws, model.cfg.loss.exclude_boundary)?;
        let mut g = Graph::new();
        let mut p = Binder::new(&model.store);
        let Some((loss, _)) = group_loss(model, &mut g, &mut p, ctx, &gb)? else {
            continue;
        };
        live += 1;
        let share = gb.rows() as f64 / frames as f64;
        let total = g.value(loss.total).item();
        if !total.is_finite() {
            return Err(HdysError::NonFiniteLoss { epoch, batch });
        }
        let root = g.scale(loss.total, share)?;
        let mut grads = g.backward(root)?;
        accumulate_grads(&mut acc, p.take_grads(&mut grads));
        let f = gb.rows() as f64;
        if let Some(r) = loss.recon {
            tally.recon.0 += f * r;
            tally.recon.1 += f;
        }
        if let Some(a) = loss.align {
            tally.align.0 += f * a;
            tally.align.1 += f;
        }
        tally.total.0 += f * total;
        tally.total.1 += f;
    }
    if live == 0 {
        return Err(HdysError::DeadConfig(
            "every loss term is masked for this batch (kinematics-only data with alignment off?)".into(),
        ));
    }
    if acc.iter().flatten().any(|t| !t.all_finite()) {
        return Err(HdysError::NonFiniteLoss { epoch, batch });
    }
    Ok(acc)
}

/// Trains a fresh model on the sampled profiles of `ds`. `on_epoch` sees
/// each finished epoch.
pub fn train_with(cfg: &HdysConfig, ds: &Dataset, mut on_epoch: impl FnMut(&EpochLoss)) -> Result<TrainOutcome> {
    let t0 = Instant::now();
    let mut model = Model::initialize(cfg, ds)?;
    let adam = AdamWConfig {
        lr: cfg.train.lr,
        weight_decay: cfg.train.weight_decay,
        beta1: cfg.train.beta1,
        beta2: cfg.train.beta2,
        eps: cfg.train.eps,
    };
    let mut opt = AdamWState::new(adam, &model.store);
    let per_batch = (cfg.train.frames_per_batch / cfg.model.window).max(1);
    let mut curve = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        opt.config.lr = lr_at(cfg, epoch);
        let windows = epoch_windows(ds, cfg, epoch)?;
        let mut tally = Tally::default();
        let mut batches = 0;
        for (b, chunk) in windows.chunks(per_batch).enumerate() {
            let mut ctx = Ctx {
                act: cfg.model.activation,
                dropout: cfg.train.dropout,
                rng: Some(ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(cfg.train.seed, epoch as u64), b as u64 + 1))),
            };
            let mut grads = batch_step(&model, chunk, &mut ctx, &mut tally, epoch, b)?;
            if cfg.train.grad_clip > 0.0 {
                clip_grad_norm(&mut grads, cfg.train.grad_clip);
            }
            opt.step(&mut model.store, &grads)?;
            batches += 1;
        }
        let mean = |(s, n): (f64, f64)| if n > 0.0 { s / n } else { 0.0 };
        let e = EpochLoss {
            epoch: epoch + 1,
            recon: mean(tally.recon),
            align: mean(tally.align),
            total: mean(tally.total),
            batches,
        };
        on_epoch(&e);
        curve.push(e);
    }
    Ok(TrainOutcome {
        model,
        curve,
        elapsed: t0.elapsed(),
    })
}

pub fn train(cfg: &HdysConfig, ds: &Dataset) -> Result<TrainOutcome> {
    train_with(cfg, ds, |_| {})
}

/// Loss curve as CSV.
pub fn curve_csv(curve: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,recon,align,total,batches\n");
    for e in curve {
        s.push_str(&format!("{},{:.9e},{:.9e},{:.9e},{}\n", e.epoch, e.recon, e.align, e.total, e.batches));
    }
    s
}
