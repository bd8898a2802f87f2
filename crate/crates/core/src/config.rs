//! `hdys-config/1`: flat `key = value` text with dotted keys.
//!
//! ```text
//! # comment
//! schema = hdys-config/1
//! preset = desk
//! model.d = 64
//! loss.alpha2 = 0.05
//! ```
//!
//! `preset` is applied first wherever it appears; every other key then
//! overrides one field. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{HdysError, Result};
use crate::util::sha256_hex;

pub const CONFIG_SCHEMA: &str = "hdys-config/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Silu,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Similarity {
    /// Inner product of L2-normalized latents over the temperature.
    Cosine,
    /// Plain inner product over the temperature.
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub set_width: usize,
    pub set_layers: usize,
    pub set_heads: usize,
    pub mlp_hidden: (usize, usize),
    pub temporal_layers: usize,
    pub temporal_heads: usize,
    pub ff_mult: usize,
    /// Head hidden width for angle-tree torque, sEMG, keypoint and angle
    /// accelerations.
    pub head_small: usize,
    /// Head hidden width for pose-tree torque, muscle actions and pose
    /// accelerations.
    pub head_large: usize,
    pub dyn_hidden: usize,
    pub composer_hidden: usize,
    pub activation: Activation,
    pub tie_fdae_encoders: bool,
    pub window: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub temperature: f64,
    pub similarity: Similarity,
    pub exclude_boundary: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationConfig {
    pub no_fdae: bool,
    pub no_align: bool,
    pub no_temporal_refinement: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub frames_per_batch: usize,
    pub quota: usize,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub dropout: f64,
    /// 0 disables clipping.
    pub grad_clip: f64,
    pub lr_schedule: LrSchedule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    /// Dataset root; empty means `$HDYS_DATA_DIR`.
    pub root: String,
    pub seed: u64,
    /// Profiles to train on; empty means all.
    pub profiles: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutConfig {
    pub profile: String,
    pub k: Vec<usize>,
    pub fps: Vec<f64>,
    /// Test sequences used; 0 means all.
    pub sequences: usize,
    pub start_stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSuiteConfig {
    /// Profile whose scale variants (Single-50, 50/50, Single) are run.
    pub scale_target: String,
    /// Epoch count for grid runs; 0 keeps `train.epochs`.
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HdysConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub ablation: AblationConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub rollout: RolloutConfig,
    pub suite: AblationSuiteConfig,
}

impl Default for HdysConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl HdysConfig {
    /// Single-core desk scale.
    pub fn desk() -> Self {
        HdysConfig {
            preset: Preset::Desk,
            model: ModelConfig {
                d: 64,
                set_width: 16,
                set_layers: 3,
                set_heads: 2,
                mlp_hidden: (256, 128),
                temporal_layers: 4,
                temporal_heads: 4,
                ff_mult: 2,
                head_small: 32,
                head_large: 64,
                dyn_hidden: 64,
                composer_hidden: 128,
                activation: Activation::Gelu,
                tie_fdae_encoders: false,
                window: 16,
            },
            loss: LossConfig {
                alpha1: 0.01,
                alpha2: 0.05,
                temperature: 0.1,
                similarity: Similarity::Cosine,
                exclude_boundary: true,
            },
            ablation: AblationConfig::default(),
            train: TrainConfig {
                epochs: 200,
                frames_per_batch: 480,
                quota: 12,
                seed: 0,
                lr: 3e-3,
                weight_decay: 1e-2,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                dropout: 0.0,
                grad_clip: 0.0,
                lr_schedule: LrSchedule::Cosine,
            },
            data: DataConfig {
                root: String::new(),
                seed: 0,
                profiles: Vec::new(),
            },
            eval: EvalConfig { stride: 8 },
            rollout: RolloutConfig {
                profile: "A".into(),
                k: vec![1, 2, 3, 4, 5],
                fps: vec![90.0, 120.0, 150.0],
                sequences: 0,
                start_stride: 10,
            },
            suite: AblationSuiteConfig {
                scale_target: "A".into(),
                epochs: 0,
            },
        }
    }

    /// The published architecture and schedule.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.preset = Preset::Paper;
        c.model.d = 128;
        c.model.set_width = 128;
        c.train.epochs = 1000;
        c.train.frames_per_batch = 9600;
        c.train.quota = 3000;
        c.train.lr = 1e-3;
        c.train.lr_schedule = LrSchedule::Constant;
        c
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| HdysError::Config {
                key: format!("line {}", n + 1),
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) => Self::from_preset(v)?,
            None => Self::desk(),
        };
        for (k, v) in &pairs {
            match k.as_str() {
                "preset" => {}
                "schema" if v == CONFIG_SCHEMA => {}
                "schema" => {
                    return Err(HdysError::Version {
                        expected: CONFIG_SCHEMA.into(),
                        found: v.clone(),
                    })
                }
                _ => cfg.set(k, v)?,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(HdysError::Config {
                key: "preset".into(),
                msg: format!("unknown preset `{other}` (desk | paper)"),
            }),
        }
    }

    /// Applies `key=value` overrides in order, then validates.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| HdysError::Config {
                key: o.to_string(),
                msg: "override must be `key=value`".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "preset" {
                let keep = self.clone();
                *self = Self::from_preset(v)?;
                self.data = keep.data;
            } else {
                self.set(k, v)?;
            }
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let l = &mut self.loss;
        let t = &mut self.train;
        match key {
            "model.d" => m.d = num(key, v)?,
            "model.set_width" => m.set_width = num(key, v)?,
            "model.set_layers" => m.set_layers = num(key, v)?,
            "model.set_heads" => m.set_heads = num(key, v)?,
            "model.mlp_hidden" => {
                let xs: Vec<usize> = list(key, v)?;
                if xs.len() != 2 {
                    return Err(bad(key, "expects two widths, e.g. `256,128`"));
                }
                m.mlp_hidden = (xs[0], xs[1]);
            }
            "model.temporal_layers" => m.temporal_layers = num(key, v)?,
            "model.temporal_heads" => m.temporal_heads = num(key, v)?,
            "model.ff_mult" => m.ff_mult = num(key, v)?,
            "model.head_small" => m.head_small = num(key, v)?,
            "model.head_large" => m.head_large = num(key, v)?,
            "model.dyn_hidden" => m.dyn_hidden = num(key, v)?,
            "model.composer_hidden" => m.composer_hidden = num(key, v)?,
            "model.activation" => {
                m.activation = match v {
                    "gelu" => Activation::Gelu,
                    "silu" => Activation::Silu,
                    "relu" => Activation::Relu,
                    _ => return Err(bad(key, "expects gelu | silu | relu")),
                }
            }
            "model.tie_fdae_encoders" => m.tie_fdae_encoders = flag(key, v)?,
            "model.window" => m.window = num(key, v)?,
            "loss.alpha1" => l.alpha1 = num(key, v)?,
            "loss.alpha2" => l.alpha2 = num(key, v)?,
            "loss.temperature" => l.temperature = num(key, v)?,
            "loss.similarity" => {
                l.similarity = match v {
                    "cosine" => Similarity::Cosine,
                    "raw" => Similarity::Raw,
                    _ => return Err(bad(key, "expects cosine | raw")),
                }
            }
            "loss.exclude_boundary" => l.exclude_boundary = flag(key, v)?,
            "ablation.no_fdae" => self.ablation.no_fdae = flag(key, v)?,
            "ablation.no_align" => self.ablation.no_align = flag(key, v)?,
            "ablation.no_temporal_refinement" => self.ablation.no_temporal_refinement = flag(key, v)?,
            "ablation.scale_target" => self.suite.scale_target = v.to_string(),
            "ablation.epochs" => self.suite.epochs = num(key, v)?,
            "train.epochs" => t.epochs = num(key, v)?,
            "train.frames_per_batch" => t.frames_per_batch = num(key, v)?,
            "train.quota" => t.quota = num(key, v)?,
            "train.seed" => t.seed = num(key, v)?,
            "train.lr" => t.lr = num(key, v)?,
            "train.weight_decay" => t.weight_decay = num(key, v)?,
            "train.beta1" => t.beta1 = num(key, v)?,
            "train.beta2" => t.beta2 = num(key, v)?,
            "train.eps" => t.eps = num(key, v)?,
            "train.dropout" => t.dropout = num(key, v)?,
            "train.grad_clip" => t.grad_clip = num(key, v)?,
            "train.lr_schedule" => {
                t.lr_schedule = match v {
                    "constant" => LrSchedule::Constant,
                    "cosine" => LrSchedule::Cosine,
                    _ => return Err(bad(key, "expects constant | cosine")),
                }
            }
            "data.root" => self.data.root = v.to_string(),
            "data.seed" => self.data.seed = num(key, v)?,
            "data.profiles" => {
                self.data.profiles = if v.is_empty() || v == "all" {
                    Vec::new()
                } else {
                    v.split(',').map(|s| s.trim().to_string()).collect()
                }
            }
            "eval.stride" => self.eval.stride = num(key, v)?,
            "rollout.profile" => self.rollout.profile = v.to_string(),
            "rollout.k" => self.rollout.k = list(key, v)?,
            "rollout.fps" => self.rollout.fps = list(key, v)?,
            "rollout.sequences" => self.rollout.sequences = num(key, v)?,
            "rollout.start_stride" => self.rollout.start_stride = num(key, v)?,
            _ => return Err(HdysError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every key with its current value, in schema order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let l = &self.loss;
        let t = &self.train;
        let join = |xs: Vec<String>| xs.join(",");
        vec![
            ("model.d", m.d.to_string()),
            ("model.set_width", m.set_width.to_string()),
            ("model.set_layers", m.set_layers.to_string()),
            ("model.set_heads", m.set_heads.to_string()),
            ("model.mlp_hidden", format!("{},{}", m.mlp_hidden.0, m.mlp_hidden.1)),
            ("model.temporal_layers", m.temporal_layers.to_string()),
            ("model.temporal_heads", m.temporal_heads.to_string()),
            ("model.ff_mult", m.ff_mult.to_string()),
            ("model.head_small", m.head_small.to_string()),
            ("model.head_large", m.head_large.to_string()),
            ("model.dyn_hidden", m.dyn_hidden.to_string()),
            ("model.composer_hidden", m.composer_hidden.to_string()),
            (
                "model.activation",
                match m.activation {
                    Activation::Gelu => "gelu",
                    Activation::Silu => "silu",
                    Activation::Relu => "relu",
                }
                .into(),
            ),
            ("model.tie_fdae_encoders", m.tie_fdae_encoders.to_string()),
            ("model.window", m.window.to_string()),
            ("loss.alpha1", fmt_f(l.alpha1)),
            ("loss.alpha2", fmt_f(l.alpha2)),
            ("loss.temperature", fmt_f(l.temperature)),
            (
                "loss.similarity",
                match l.similarity {
                    Similarity::Cosine => "cosine",
                    Similarity::Raw => "raw",
                }
                .into(),
            ),
            ("loss.exclude_boundary", l.exclude_boundary.to_string()),
            ("ablation.no_fdae", self.ablation.no_fdae.to_string()),
            ("ablation.no_align", self.ablation.no_align.to_string()),
            ("ablation.no_temporal_refinement", self.ablation.no_temporal_refinement.to_string()),
            ("ablation.scale_target", self.suite.scale_target.clone()),
            ("ablation.epochs", self.suite.epochs.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.frames_per_batch", t.frames_per_batch.to_string()),
            ("train.quota", t.quota.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.lr", fmt_f(t.lr)),
            ("train.weight_decay", fmt_f(t.weight_decay)),
            ("train.beta1", fmt_f(t.beta1)),
            ("train.beta2", fmt_f(t.beta2)),
            ("train.eps", fmt_f(t.eps)),
            ("train.dropout", fmt_f(t.dropout)),
            ("train.grad_clip", fmt_f(t.grad_clip)),
            (
                "train.lr_schedule",
                match t.lr_schedule {
                    LrSchedule::Constant => "constant",
                    LrSchedule::Cosine => "cosine",
                }
                .into(),
            ),
            ("data.root", self.data.root.clone()),
            ("data.seed", self.data.seed.to_string()),
            ("data.profiles", join(self.data.profiles.clone())),
            ("eval.stride", self.eval.stride.to_string()),
            ("rollout.profile", self.rollout.profile.clone()),
            ("rollout.k", join(self.rollout.k.iter().map(|k| k.to_string()).collect())),
            ("rollout.fps", join(self.rollout.fps.iter().map(|f| fmt_f(*f)).collect())),
            ("rollout.sequences", self.rollout.sequences.to_string()),
            ("rollout.start_stride", self.rollout.start_stride.to_string()),
        ]
    }

    /// Canonical text form with every key explicit.
    pub fn to_text(&self) -> String {
        let preset = match self.preset {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        };
        let mut s = format!("schema = {CONFIG_SCHEMA}\npreset = {preset}\n");
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(bad(key, msg)) };
        check(m.d > 0, "model.d", "must be positive")?;
        check(m.window >= 1, "model.window", "must be at least 1")?;
        check(m.set_heads > 0 && m.set_width % m.set_heads == 0, "model.set_heads", "must divide model.set_width")?;
        check(
            m.temporal_heads > 0 && m.d % m.temporal_heads == 0,
            "model.temporal_heads",
            "must divide model.d",
        )?;
        check(m.set_layers >= 1, "model.set_layers", "must be at least 1")?;
        check(m.ff_mult >= 1, "model.ff_mult", "must be at least 1")?;
        check(self.loss.alpha1 >= 0.0, "loss.alpha1", "must be non-negative")?;
        check(self.loss.alpha2 >= 0.0, "loss.alpha2", "must be non-negative")?;
        check(self.loss.temperature > 0.0, "loss.temperature", "must be positive")?;
        check(
            self.train.frames_per_batch >= m.window,
            "train.frames_per_batch",
            "must be at least model.window",
        )?;
        check(self.train.quota > 0, "train.quota", "must be positive")?;
        check(self.train.lr > 0.0, "train.lr", "must be positive")?;
        check((0.0..1.0).contains(&self.train.dropout), "train.dropout", "must be in [0, 1)")?;
        check(self.train.grad_clip >= 0.0, "train.grad_clip", "must be non-negative")?;
        check(self.eval.stride >= 1, "eval.stride", "must be at least 1")?;
        check(self.rollout.start_stride >= 1, "rollout.start_stride", "must be at least 1")?;
        check(self.rollout.fps.iter().all(|f| *f > 0.0), "rollout.fps", "must be positive")?;
        check(self.rollout.k.iter().all(|k| *k >= 1), "rollout.k", "must be at least 1")?;
        Ok(())
    }
}

fn bad(key: &str, msg: &str) -> HdysError {
    HdysError::Config {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, &format!("cannot parse `{v}`")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(bad(key, "expects true | false")),
    }
}

/// Shortest text that parses back to the same float.
fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}
