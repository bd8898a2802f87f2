//! Test-split evaluation: per-representation, averaged and best rows.

use std::collections::BTreeMap;

use hdys_numcore::{Binder, Graph};
use serde::{Deserialize, Serialize};

use super::metrics::{mpje, pcc_channels, rmse};
use crate::datahub::{Dataset, DomainProfile};
use crate::error::{HdysError, Result};
use crate::kinrep::{Channel, SequenceRecord};
use crate::model::nn::Ctx;
use crate::model::{build_group, Model, Window};
use crate::util::sha256_hex;

/// Windows per forward pass during evaluation.
const EVAL_CHUNK: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(HdysError::Invalid(format!("unknown split `{s}`"))),
        }
    }
}

/// Window starts covering `frames` with the given stride; the last window
/// is flush with the end.
pub fn window_starts(frames: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if frames < window {
        return Err(HdysError::Invalid(format!("{frames} frames is shorter than one window")));
    }
    let last = frames - window;
    let mut v: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if *v.last().expect("non-empty") != last {
        v.push(last);
    }
    Ok(v)
}

/// Dense predictions for one sequence, in physical units.
#[derive(Clone, Debug)]
pub struct SequencePrediction {
    pub id: String,
    pub frames: usize,
    pub width: usize,
    pub sources: Vec<Channel>,
    /// One frame-major `[frames, width]` array per source.
    pub per_source: Vec<Vec<f64>>,
    /// Sum and count of same-frame cross-source latent cosines.
    pub cosine: (f64, usize),
}

impl SequencePrediction {
    /// Mean of the per-source predictions.
    pub fn averaged(&self) -> Vec<f64> {
        let n = self.per_source.len() as f64;
        let mut out = vec![0.0; self.frames * self.width];
        for p in &self.per_source {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v / n;
            }
        }
        out
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Runs the model over overlapping windows and averages overlaps. With
/// `latents`, the FDAE runs too and same-frame cosines over all latent
/// sources are accumulated.
pub fn predict_sequence(model: &Model, rec: &SequenceRecord, stride: usize, latents: bool) -> Result<SequencePrediction> {
    let w = model.cfg.model.window;
    let starts = window_starts(rec.frames(), w, stride)?;
    let windows: Vec<Window> = starts.iter().map(|&start| Window { rec, start }).collect();
    let sources: Vec<Channel> = rec.mask().kinematics();
    let kind = rec.mask().dynamics().first().copied();
    let (width, stats) = match kind {
        Some(c) => (rec.block(c).expect("mask").width, Some(model.stats(c, &rec.tree)?.clone())),
        None => (0, None),
    };
    let n = rec.frames();
    let mut sums = vec![vec![0.0; n * width]; sources.len()];
    let mut counts = vec![0usize; n];
    let mut cos = (0.0, 0usize);
    let mut ctx = Ctx::eval(model.cfg.model.activation);
    for chunk in windows.chunks(EVAL_CHUNK) {
        let gb = build_group(model, chunk, false)?;
        let mut g = Graph::new();
        let mut p = Binder::new(&model.store);
        let fwd = model.forward(&mut g, &mut p, &mut ctx, &gb, latents)?;
        let rows = gb.rows();
        if let (Some(tau), Some(st)) = (fwd.tau_hat, &stats) {
            let v = g.value(tau);
            for (s, sum) in sums.iter_mut().enumerate() {
                for (i, win) in chunk.iter().enumerate() {
                    for t in 0..w {
                        let row = v.row(s * rows + i * w + t);
                        let f = win.start + t;
                        for (k, x) in row.iter().enumerate() {
                            sum[f * width + k] += x * st.std[k] + st.mean[k];
                        }
                    }
                }
            }
        }
        for win in chunk {
            for c in &mut counts[win.start..win.start + w] {
                *c += 1;
            }
        }
        if latents {
            let zs: Vec<_> = fwd.z.iter().chain(&fwd.z_fd).map(|&z| g.value(z).clone()).collect();
            for r in 0..rows {
                for a in 0..zs.len() {
                    for b in a + 1..zs.len() {
                        cos.0 += cosine(zs[a].row(r), zs[b].row(r));
                        cos.1 += 1;
                    }
                }
            }
        }
    }
    for sum in &mut sums {
        for (f, c) in counts.iter().enumerate() {
            for x in &mut sum[f * width..(f + 1) * width] {
                *x /= *c as f64;
            }
        }
    }
    Ok(SequencePrediction {
        id: rec.id.clone(),
        frames: n,
        width,
        sources,
        per_source: sums,
        cosine: cos,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub profile: String,
    /// A channel name, `avg`, `best:<channel>` or `zero`.
    pub representation: String,
    pub mpje: f64,
    pub rmse: f64,
    pub pcc: f64,
    /// (sequence, channel) pairs that hit the zero-variance guard.
    pub pcc_guarded: usize,
}

impl MetricRow {
    pub fn get(&self, metric: &str) -> f64 {
        match metric {
            "mpje" => self.mpje,
            "rmse" => self.rmse,
            _ => self.pcc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub profile: String,
    pub dynamics: Channel,
    /// `mpje` for torque profiles, `rmse` otherwise.
    pub headline: String,
    pub sequences: usize,
    /// Per-representation rows followed by the `avg` row.
    pub rows: Vec<MetricRow>,
    pub best: MetricRow,
    pub zero: MetricRow,
}

impl ProfileReport {
    pub fn row(&self, representation: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.representation == representation)
    }

    pub fn avg(&self) -> &MetricRow {
        self.row("avg").expect("avg row")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    /// SHA-256 of the checkpoint bytes.
    pub checkpoint: String,
    pub config_hash: String,
    pub split: Split,
    pub profiles: Vec<ProfileReport>,
    /// Mean same-frame cross-source latent cosine per profile.
    pub latent_cosine: BTreeMap<String, f64>,
    /// Pooled over every profile.
    pub latent_cosine_mean: f64,
}

impl EvalReport {
    pub fn profile(&self, id: &str) -> Option<&ProfileReport> {
        self.profiles.iter().find(|p| p.profile == id)
    }

    /// `profile,representation,metric,value` rows.
    pub fn csv_rows(&self) -> Vec<[String; 4]> {
        let mut out = Vec::new();
        for p in &self.profiles {
            for r in p.rows.iter().chain([&p.best, &p.zero]) {
                for m in ["mpje", "rmse", "pcc"] {
                    out.push([p.profile.clone(), r.representation.clone(), m.into(), format!("{:.9e}", r.get(m))]);
                }
            }
        }
        for (p, c) in &self.latent_cosine {
            out.push([p.clone(), "latent".into(), "cosine".into(), format!("{c:.9e}")]);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("profile,representation,metric,value\n");
        for r in self.csv_rows() {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Metrics of one prediction set against the targets of the same sequences.
fn score(profile: &str, representation: &str, preds: &[Vec<f64>], recs: &[&SequenceRecord], kind: Channel) -> MetricRow {
    let mut abs = 0.0;
    let mut sq = Vec::new();
    let mut tg = Vec::new();
    let mut n = 0usize;
    let mut pcc_sum = 0.0;
    let mut pcc_n = 0usize;
    let mut guarded = 0;
    for (pred, rec) in preds.iter().zip(recs) {
        let b = rec.block(kind).expect("mask");
        let mass = kind.is_torque().then_some(rec.subject_mass);
        abs += mpje(pred, &b.data, mass) * pred.len() as f64;
        n += pred.len();
        sq.extend_from_slice(pred);
        tg.extend_from_slice(&b.data);
        let c = pcc_channels(pred, &b.data, b.width);
        pcc_sum += c.values.iter().sum::<f64>();
        pcc_n += c.values.len();
        guarded += c.guarded.len();
    }
    MetricRow {
        profile: profile.into(),
        representation: representation.into(),
        mpje: if n > 0 { abs / n as f64 } else { 0.0 },
        rmse: rmse(&sq, &tg),
        pcc: if pcc_n > 0 { pcc_sum / pcc_n as f64 } else { 0.0 },
        pcc_guarded: guarded,
    }
}

/// Best row: the per-representation row with the lowest headline metric.
pub fn best_row(rows: &[MetricRow], headline: &str) -> MetricRow {
    let best = rows
        .iter()
        .filter(|r| r.representation != "avg")
        .min_by(|a, b| a.get(headline).total_cmp(&b.get(headline)))
        .expect("at least one representation");
    MetricRow {
        representation: format!("best:{}", best.representation),
        ..best.clone()
    }
}

pub fn headline_metric(kind: Channel) -> &'static str {
    if kind.is_torque() {
        "mpje"
    } else {
        "rmse"
    }
}

/// Profiles of the manifest the model can evaluate.
pub fn evaluable_profiles<'a>(model: &Model, ds: &'a Dataset) -> Vec<&'a DomainProfile> {
    ds.manifest
        .profiles
        .iter()
        .filter(|p| model.supports(&p.kinematics, &p.dynamics, &p.tree))
        .collect()
}

/// Evaluates every supported profile (or the named ones) on a split.
pub fn evaluate(model: &Model, ds: &Dataset, split: Split, profiles: &[String], latents: bool) -> Result<EvalReport> {
    let chosen: Vec<&DomainProfile> = if profiles.is_empty() {
        evaluable_profiles(model, ds)
    } else {
        let mut v = Vec::new();
        for id in profiles {
            let p = ds
                .manifest
                .profile(id)
                .ok_or_else(|| HdysError::Invalid(format!("unknown profile `{id}`")))?;
            if !model.supports(&p.kinematics, &p.dynamics, &p.tree) {
                return Err(HdysError::ChannelMismatch(format!("checkpoint cannot evaluate profile {id}")));
            }
            v.push(p);
        }
        v
    };
    let stride = model.cfg.eval.stride;
    let mut reports = Vec::new();
    let mut latent_cosine = BTreeMap::new();
    let mut pooled = (0.0, 0usize);
    for p in chosen {
        let split_ids = &ds.manifest.splits[&p.id];
        let ids = match split {
            Split::Train => &split_ids.train,
            Split::Test => &split_ids.test,
        };
        if ids.is_empty() {
            continue;
        }
        let recs: Vec<&SequenceRecord> = ids.iter().map(|id| ds.get(id)).collect::<Result<_>>()?;
        let preds: Vec<SequencePrediction> = recs
            .iter()
            .map(|r| predict_sequence(model, r, stride, latents))
            .collect::<Result<_>>()?;
        if latents {
            let (s, n) = preds.iter().fold((0.0, 0), |(s, n), p| (s + p.cosine.0, n + p.cosine.1));
            if n > 0 {
                latent_cosine.insert(p.id.clone(), s / n as f64);
                pooled.0 += s;
                pooled.1 += n;
            }
        }
        let Some(&kind) = p.dynamics.first() else { continue };
        let headline = headline_metric(kind);
        let mut rows = Vec::new();
        for (s, c) in p.kinematics.iter().enumerate() {
            let per: Vec<Vec<f64>> = preds.iter().map(|x| x.per_source[s].clone()).collect();
            rows.push(score(&p.id, c.name(), &per, &recs, kind));
        }
        let avg: Vec<Vec<f64>> = preds.iter().map(SequencePrediction::averaged).collect();
        rows.push(score(&p.id, "avg", &avg, &recs, kind));
        let zeros: Vec<Vec<f64>> = preds.iter().map(|x| vec![0.0; x.frames * x.width]).collect();
        let zero = score(&p.id, "zero", &zeros, &recs, kind);
        let best = best_row(&rows, headline);
        reports.push(ProfileReport {
            profile: p.id.clone(),
            dynamics: kind,
            headline: headline.into(),
            sequences: recs.len(),
            rows,
            best,
            zero,
        });
    }
    Ok(EvalReport {
        seed: model.cfg.train.seed,
        checkpoint: sha256_hex(&model.checkpoint().encode()),
        config_hash: model.cfg.hash(),
        split,
        profiles: reports,
        latent_cosine,
        latent_cosine_mean: if pooled.1 > 0 { pooled.0 / pooled.1 as f64 } else { 0.0 },
    })
}
