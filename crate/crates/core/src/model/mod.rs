//! The HDyS model: kinematics encoders, the inverse-dynamics decoder (shared
//! temporal transformer plus per-dynamics heads), and the forward-dynamics
//! auto-encoder (accel-free encoders, dynamics encoders, a shared composer
//! and acceleration heads).

pub mod batch;
pub mod layout;
pub mod losses;
pub mod nn;

use std::collections::BTreeMap;
use std::path::Path;

use hdys_numcore::{Binder, Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::HdysConfig;
use crate::datahub::Dataset;
use crate::error::{HdysError, Result};
use crate::kinrep::Channel;
use crate::util::atomic_write;
use batch::{GroupBatch, KinInput};
use layout::{compute_stats, slot_key, Layout, Moments};
use nn::{Ctx, Init, Mlp, SetEncoder, Temporal};

pub use batch::{build_group, Window};
pub use layout::Slot;

pub const MODEL_SCHEMA: &str = "hdys-model/1";

/// Sidecar stored next to a checkpoint; enough to rebuild the parameter
/// layout before loading values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub schema: String,
    pub config: String,
    pub config_hash: String,
    pub layout: Layout,
}

pub struct Model {
    pub cfg: HdysConfig,
    pub layout: Layout,
    pub store: ParamStore,
    stats: BTreeMap<String, (ParamId, ParamId)>,
    moments: BTreeMap<String, Moments>,
    set_enc: BTreeMap<Channel, SetEncoder>,
    set_enc_fd: BTreeMap<Channel, SetEncoder>,
    vec_enc: BTreeMap<String, Mlp>,
    vec_enc_fd: BTreeMap<String, Mlp>,
    temporal: Option<Temporal>,
    heads: BTreeMap<String, Mlp>,
    dyn_enc: BTreeMap<String, Mlp>,
    composer: Option<Mlp>,
    accel_heads: BTreeMap<String, Mlp>,
}

/// Everything one forward pass produces for a group.
pub struct Forward {
    pub sources: Vec<Channel>,
    /// Per-frame IDAE latents, one `[rows, d]` per source.
    pub z: Vec<Var>,
    /// FDAE composer latents, one `[rows, d]` per source.
    pub z_fd: Vec<Var>,
    /// Normalized dynamics predictions of all sources stacked row-wise,
    /// `[sources * rows, width]`.
    pub tau_hat: Option<Var>,
    /// Normalized acceleration predictions per target, stacked like `tau_hat`.
    pub acc_hat: Vec<(Channel, Var)>,
}

fn head_hidden(cfg: &HdysConfig, c: Channel) -> usize {
    match c {
        Channel::TauTr | Channel::TauE | Channel::Keypoints | Channel::Angles => cfg.model.head_small,
        _ => cfg.model.head_large,
    }
}

impl Model {
    /// Fresh model for the sampled profiles of `ds`, with statistics from its
    /// training split.
    pub fn initialize(cfg: &HdysConfig, ds: &Dataset) -> Result<Model> {
        let layout = Layout::from_dataset(ds, cfg)?;
        let moments = compute_stats(ds, &layout)?;
        Ok(Self::build(cfg, layout, moments, cfg.train.seed))
    }

    /// Parameters are created in a fixed order, so equal inputs give equal
    /// stores.
    pub fn build(cfg: &HdysConfig, layout: Layout, moments: BTreeMap<String, Moments>, seed: u64) -> Model {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = &cfg.model;
        let d = m.d;
        let mut stats = BTreeMap::new();
        for s in layout.kinematics.iter().chain(&layout.dynamics) {
            let mo = moments.get(&s.key()).cloned().unwrap_or_else(|| Moments::identity(s.width));
            let mean = store.add(format!("stats.{}.mean", s.key()), Tensor::vector(mo.mean), false);
            let std = store.add(format!("stats.{}.std", s.key()), Tensor::vector(mo.std), false);
            stats.insert(s.key(), (mean, std));
        }
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let fdae = !cfg.ablation.no_fdae && !layout.accel.is_empty();
        let separate_fd = fdae && !m.tie_fdae_encoders;
        let set = |init: &mut Init, name: &str, tw: usize| {
            SetEncoder::new(init, name, tw, m.set_width, m.set_layers, m.set_heads, m.ff_mult, d)
        };
        let mut set_enc = BTreeMap::new();
        let mut set_enc_fd = BTreeMap::new();
        let mut vec_enc = BTreeMap::new();
        let mut vec_enc_fd = BTreeMap::new();
        for s in &layout.kinematics {
            if s.channel.is_set() {
                if !set_enc.contains_key(&s.channel) {
                    set_enc.insert(s.channel, set(&mut init, &format!("enc.{}", s.channel.name()), 9));
                    if separate_fd {
                        set_enc_fd.insert(s.channel, set(&mut init, &format!("fd.enc.{}", s.channel.name()), 6));
                    }
                }
            } else {
                let (h1, h2) = m.mlp_hidden;
                vec_enc.insert(s.key(), Mlp::new(&mut init, &format!("enc.{}", s.key()), &[s.width, h1, h2, d]));
                if separate_fd {
                    let w = s.width / 3 * 2;
                    vec_enc_fd.insert(s.key(), Mlp::new(&mut init, &format!("fd.enc.{}", s.key()), &[w, h1, h2, d]));
                }
            }
        }
        let temporal = (!cfg.ablation.no_temporal_refinement && !layout.dynamics.is_empty())
            .then(|| Temporal::new(&mut init, "temporal", d, m.temporal_layers, m.temporal_heads, m.ff_mult, m.window));
        let mut heads = BTreeMap::new();
        let mut dyn_enc = BTreeMap::new();
        for s in &layout.dynamics {
            let h = head_hidden(cfg, s.channel);
            heads.insert(s.key(), Mlp::new(&mut init, &format!("head.{}", s.key()), &[d, h, s.width]));
            if fdae {
                dyn_enc.insert(
                    s.key(),
                    Mlp::new(&mut init, &format!("fd.dyn.{}", s.key()), &[s.width, m.dyn_hidden, d]),
                );
            }
        }
        let composer = fdae.then(|| Mlp::new(&mut init, "fd.composer", &[2 * d, m.composer_hidden, d]));
        let mut accel_heads = BTreeMap::new();
        if fdae {
            for s in &layout.accel {
                let h = head_hidden(cfg, s.channel);
                accel_heads.insert(s.key(), Mlp::new(&mut init, &format!("fd.acc.{}", s.key()), &[d, h, s.width]));
            }
        }
        let mut model = Model {
            cfg: cfg.clone(),
            layout,
            store,
            stats,
            moments: BTreeMap::new(),
            set_enc,
            set_enc_fd,
            vec_enc,
            vec_enc_fd,
            temporal,
            heads,
            dyn_enc,
            composer,
            accel_heads,
        };
        model.refresh_moments();
        model
    }

    /// Re-reads the frozen statistics from the store.
    fn refresh_moments(&mut self) {
        self.moments = self
            .stats
            .iter()
            .map(|(k, (m, s))| {
                let mo = Moments {
                    mean: self.store.get(*m).value.data().to_vec(),
                    std: self.store.get(*s).value.data().to_vec(),
                };
                (k.clone(), mo)
            })
            .collect();
    }

    pub fn stats(&self, c: Channel, tree: &str) -> Result<&Moments> {
        self.moments
            .get(&slot_key(c, tree))
            .ok_or_else(|| HdysError::ChannelMismatch(format!("model has no {c} module for tree {tree}")))
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count_trainable()
    }

    pub fn has_fdae(&self) -> bool {
        self.composer.is_some()
    }

    /// Whether every module needed for a profile's channels exists.
    pub fn supports(&self, kinematics: &[Channel], dynamics: &[Channel], tree: &str) -> bool {
        kinematics.iter().all(|&c| self.layout.kinematics_slot(c, tree).is_some())
            && dynamics.iter().all(|&c| self.heads.contains_key(&slot_key(c, tree)))
    }

    fn encode(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, batch: &GroupBatch, c: Channel, input: &KinInput, fd: bool) -> Result<Var> {
        let key = slot_key(c, &batch.tree);
        let tied = fd && self.cfg.model.tie_fdae_encoders;
        match input {
            KinInput::Set(chunks) => {
                let enc = if fd && !tied { self.set_enc_fd.get(&c) } else { self.set_enc.get(&c) }
                    .ok_or_else(|| HdysError::ChannelMismatch(format!("model has no {c} encoder")))?;
                let mut parts = Vec::with_capacity(chunks.len());
                let mut order = Vec::with_capacity(batch.windows);
                for ch in chunks {
                    let mut x = g.constant(ch.tokens.clone());
                    if fd {
                        x = g.slice_cols(x, 0, 6)?;
                        if tied {
                            let z = g.constant(Tensor::zeros(&[ch.tokens.rows(), 3]));
                            x = g.concat_cols(&[x, z])?;
                        }
                    }
                    parts.push(enc.forward(g, p, ctx, x, ch.windows.len() * batch.window)?);
                    order.extend(ch.windows.iter().copied());
                }
                let z = if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts)? };
                if order.windows(2).all(|w| w[0] < w[1]) {
                    return Ok(z);
                }
                // chunk-major rows back to window order
                let mut pos = vec![0; batch.windows];
                for (k, &wi) in order.iter().enumerate() {
                    pos[wi] = k;
                }
                let idx = (0..batch.rows())
                    .map(|r| pos[r / batch.window] * batch.window + r % batch.window)
                    .collect();
                Ok(g.gather_rows(z, idx)?)
            }
            KinInput::Vector(t) => {
                let enc = if fd && !tied { self.vec_enc_fd.get(&key) } else { self.vec_enc.get(&key) }
                    .ok_or_else(|| HdysError::ChannelMismatch(format!("model has no {c} encoder for {}", batch.tree)))?;
                let mut x = g.constant(t.clone());
                if fd {
                    let w = t.cols() / 3 * 2;
                    x = g.slice_cols(x, 0, w)?;
                    if tied {
                        let z = g.constant(Tensor::zeros(&[t.rows(), t.cols() - w]));
                        x = g.concat_cols(&[x, z])?;
                    }
                }
                enc.forward(g, p, ctx, x)
            }
        }
    }

    /// IDAE latents for every kinematics source of the batch.
    pub fn encode_kinematics(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, batch: &GroupBatch) -> Result<Vec<Var>> {
        batch
            .kin
            .iter()
            .map(|(c, input)| self.encode(g, p, ctx, batch, *c, input, false))
            .collect()
    }

    /// Temporal refinement (unless ablated) and the dynamics head, applied to
    /// latents stacked as `[sources * rows, d]`.
    pub fn id_decode(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, z: Var, kind: Channel, tree: &str) -> Result<Var> {
        let d = g.value(z).cols();
        if d != self.cfg.model.d {
            return Err(HdysError::ChannelMismatch(format!("latent width {d}, model expects {}", self.cfg.model.d)));
        }
        let head = self
            .heads
            .get(&slot_key(kind, tree))
            .ok_or_else(|| HdysError::ChannelMismatch(format!("model has no {kind} head for {tree}")))?;
        let r = match &self.temporal {
            Some(t) if !self.cfg.ablation.no_temporal_refinement => t.forward(g, p, ctx, z)?,
            _ => z,
        };
        head.forward(g, p, ctx, r)
    }

    /// Composer latents `z_kin^dyn` for each source from accel-free
    /// kinematics and one dynamics block.
    pub fn fd_compose(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, batch: &GroupBatch) -> Result<Vec<Var>> {
        let composer = self.composer.as_ref().ok_or_else(|| HdysError::Invalid("model has no FDAE".into()))?;
        let (Some(kind), Some(tau)) = (batch.dyn_kind, &batch.dyn_target) else {
            return Err(HdysError::Invalid("FDAE needs exactly one dynamics block".into()));
        };
        let enc = self
            .dyn_enc
            .get(&slot_key(kind, &batch.tree))
            .ok_or_else(|| HdysError::ChannelMismatch(format!("model has no {kind} dynamics encoder")))?;
        let t = g.constant(tau.clone());
        let z_dyn = enc.forward(g, p, ctx, t)?;
        let zt: Vec<Var> = batch
            .kin
            .iter()
            .map(|(c, input)| self.encode(g, p, ctx, batch, *c, input, true))
            .collect::<Result<_>>()?;
        let n = zt.len();
        let stacked = g.concat_rows(&zt)?;
        let dyn_tiled = g.concat_rows(&vec![z_dyn; n])?;
        let joint = g.concat_cols(&[stacked, dyn_tiled])?;
        let out = composer.forward(g, p, ctx, joint)?;
        let rows = batch.rows();
        (0..n).map(|i| Ok(g.slice_rows(out, i * rows, (i + 1) * rows)?)).collect()
    }

    /// Acceleration prediction for one target from stacked composer latents.
    pub fn fd_decode(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, z: Var, target: Channel, tree: &str) -> Result<Var> {
        if target == Channel::Markers {
            return Err(HdysError::Invalid("marker accelerations are not predicted".into()));
        }
        let head = self
            .accel_heads
            .get(&slot_key(target, tree))
            .ok_or_else(|| HdysError::ChannelMismatch(format!("model has no {target} acceleration head for {tree}")))?;
        head.forward(g, p, ctx, z)
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, batch: &GroupBatch, with_fdae: bool) -> Result<Forward> {
        let sources: Vec<Channel> = batch.kin.iter().map(|(c, _)| *c).collect();
        let z = self.encode_kinematics(g, p, ctx, batch)?;
        let tau_hat = match batch.dyn_kind {
            Some(kind) => {
                let stacked = if z.len() == 1 { z[0] } else { g.concat_rows(&z)? };
                Some(self.id_decode(g, p, ctx, stacked, kind, &batch.tree)?)
            }
            None => None,
        };
        let mut z_fd = Vec::new();
        let mut acc_hat = Vec::new();
        if with_fdae && self.has_fdae() && batch.dyn_kind.is_some() {
            z_fd = self.fd_compose(g, p, ctx, batch)?;
            let stacked = g.concat_rows(&z_fd)?;
            for (c, _) in &batch.accel {
                acc_hat.push((*c, self.fd_decode(g, p, ctx, stacked, *c, &batch.tree)?));
            }
        }
        Ok(Forward {
            sources,
            z,
            z_fd,
            tau_hat,
            acc_hat,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(&self.store, None)
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            schema: MODEL_SCHEMA.into(),
            config: self.cfg.to_text(),
            config_hash: self.cfg.hash(),
            layout: self.layout.clone(),
        }
    }

    /// Writes `<stem>.ckpt` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        atomic_write(&dir.join(format!("{stem}.ckpt")), &self.checkpoint().encode())?;
        let meta = serde_json::to_string_pretty(&self.meta())?;
        atomic_write(&dir.join(format!("{stem}.json")), meta.as_bytes())
    }

    pub fn from_parts(meta: &ModelMeta, ckpt: &Checkpoint) -> Result<Model> {
        if meta.schema != MODEL_SCHEMA {
            return Err(HdysError::Version {
                expected: MODEL_SCHEMA.into(),
                found: meta.schema.clone(),
            });
        }
        let cfg = HdysConfig::parse(&meta.config)?;
        let mut model = Self::build(&cfg, meta.layout.clone(), BTreeMap::new(), 0);
        ckpt.load_into(&mut model.store)?;
        model.refresh_moments();
        Ok(model)
    }

    /// Loads from a checkpoint path; the sidecar is the same path with a
    /// `.json` extension.
    pub fn load(ckpt_path: &Path) -> Result<Model> {
        let meta: ModelMeta = serde_json::from_str(&std::fs::read_to_string(ckpt_path.with_extension("json"))?)?;
        let ckpt = Checkpoint::load(ckpt_path)?;
        Self::from_parts(&meta, &ckpt)
    }
}
