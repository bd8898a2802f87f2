//! Layers over the numcore tape: linear, affine layer norm, MLP, pre-norm
//! transformer block, set encoder and temporal encoder.

use hdys_numcore::{kaiming_uniform, Binder, Graph, OpKind, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::Activation;
use crate::error::Result;

/// Per-forward settings shared by every layer.
pub struct Ctx {
    pub act: Activation,
    pub dropout: f64,
    /// Present only in training forwards; drives dropout masks.
    pub rng: Option<ChaCha8Rng>,
}

impl Ctx {
    pub fn eval(act: Activation) -> Self {
        Ctx {
            act,
            dropout: 0.0,
            rng: None,
        }
    }

    fn activate(&self, g: &mut Graph, x: Var) -> Result<Var> {
        Ok(match self.act {
            Activation::Gelu => g.gelu(x)?,
            Activation::Silu => g.apply(OpKind::Silu, &[x])?,
            Activation::Relu => g.apply(OpKind::Relu, &[x])?,
        })
    }

    fn dropout(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        let p = self.dropout;
        let Some(rng) = self.rng.as_mut().filter(|_| p > 0.0) else {
            return Ok(x);
        };
        let shape = g.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let m = g.constant(Tensor::new(shape, mask)?);
        Ok(g.mul(x, m)?)
    }
}

/// Parameter factory with a shared name prefix.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    fn weight(&mut self, name: String, fan_in: usize, shape: &[usize]) -> ParamId {
        let t = kaiming_uniform(self.rng, fan_in, shape);
        self.store.add(name, t, true)
    }

    fn filled(&mut self, name: String, shape: &[usize], v: f64) -> ParamId {
        self.store.add(name, Tensor::full(shape, v), true)
    }

    fn small(&mut self, name: String, shape: &[usize], bound: f64) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data).expect("valid shape"), true)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, inputs: usize, outputs: usize) -> Self {
        Linear {
            w: init.weight(format!("{name}.w"), inputs, &[inputs, outputs]),
            b: init.filled(format!("{name}.b"), &[outputs], 0.0),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binder, x: Var) -> Result<Var> {
        let w = p.var(g, self.w);
        let b = p.var(g, self.b);
        let y = g.matmul(x, w)?;
        Ok(g.add(y, b)?)
    }
}

#[derive(Clone, Debug)]
pub struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    pub fn new(init: &mut Init, name: &str, width: usize) -> Self {
        Norm {
            gamma: init.filled(format!("{name}.gamma"), &[width], 1.0),
            beta: init.filled(format!("{name}.beta"), &[width], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binder, x: Var) -> Result<Var> {
        let n = g.layer_norm(x)?;
        let gamma = p.var(g, self.gamma);
        let beta = p.var(g, self.beta);
        let y = g.mul(n, gamma)?;
        Ok(g.add(y, beta)?)
    }
}

/// Linear layers with the configured activation between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [in, hidden.., out]`.
    pub fn new(init: &mut Init, name: &str, widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(init, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Mlp { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(g, p, x)?;
            if i < last {
                x = ctx.activate(g, x)?;
                x = ctx.dropout(g, x)?;
            }
        }
        Ok(x)
    }
}

/// Pre-norm block: `x + Attn(LN x)`, then `x + FF(LN x)`.
#[derive(Clone, Debug)]
pub struct Block {
    norm1: Norm,
    qkv: Linear,
    proj: Linear,
    norm2: Norm,
    ff: Mlp,
    width: usize,
    heads: usize,
}

impl Block {
    pub fn new(init: &mut Init, name: &str, width: usize, heads: usize, ff_mult: usize) -> Self {
        Block {
            norm1: Norm::new(init, &format!("{name}.ln1"), width),
            qkv: Linear::new(init, &format!("{name}.qkv"), width, 3 * width),
            proj: Linear::new(init, &format!("{name}.proj"), width, width),
            norm2: Norm::new(init, &format!("{name}.ln2"), width),
            ff: Mlp::new(init, &format!("{name}.ff"), &[width, ff_mult * width, width]),
            width,
            heads,
        }
    }

    /// `x` holds `groups` independent token sets stacked row-wise.
    pub fn forward(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, x: Var, groups: usize) -> Result<Var> {
        let w = self.width;
        let h = self.norm1.forward(g, p, x)?;
        let qkv = self.qkv.forward(g, p, h)?;
        let q = g.slice_cols(qkv, 0, w)?;
        let k = g.slice_cols(qkv, w, 2 * w)?;
        let v = g.slice_cols(qkv, 2 * w, 3 * w)?;
        let a = g.attention(q, k, v, groups, self.heads)?;
        let a = self.proj.forward(g, p, a)?;
        let x = g.add(x, a)?;
        let h = self.norm2.forward(g, p, x)?;
        let f = self.ff.forward(g, p, ctx, h)?;
        Ok(g.add(x, f)?)
    }
}

/// Permutation-invariant encoder for variable-size point sets: token
/// embedding, transformer blocks without positions, mean pooling, projection.
#[derive(Clone, Debug)]
pub struct SetEncoder {
    embed: Linear,
    blocks: Vec<Block>,
    norm: Norm,
    out: Linear,
    pub token_width: usize,
}

impl SetEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init,
        name: &str,
        token_width: usize,
        width: usize,
        layers: usize,
        heads: usize,
        ff_mult: usize,
        d: usize,
    ) -> Self {
        SetEncoder {
            embed: Linear::new(init, &format!("{name}.embed"), token_width, width),
            blocks: (0..layers)
                .map(|i| Block::new(init, &format!("{name}.block{i}"), width, heads, ff_mult))
                .collect(),
            norm: Norm::new(init, &format!("{name}.ln"), width),
            out: Linear::new(init, &format!("{name}.out"), width, d),
            token_width,
        }
    }

    /// `tokens` is `[sets * per_set, token_width]`; returns `[sets, d]`.
    pub fn forward(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, tokens: Var, sets: usize) -> Result<Var> {
        let per_set = g.value(tokens).rows() / sets.max(1);
        let mut x = self.embed.forward(g, p, tokens)?;
        for b in &self.blocks {
            x = b.forward(g, p, ctx, x, sets)?;
        }
        let x = self.norm.forward(g, p, x)?;
        let pooled = g.mean_groups(x, per_set)?;
        self.out.forward(g, p, pooled)
    }
}

/// Transformer over the frames of each window, with learned positions.
#[derive(Clone, Debug)]
pub struct Temporal {
    pos: ParamId,
    blocks: Vec<Block>,
    norm: Norm,
    window: usize,
}

impl Temporal {
    pub fn new(init: &mut Init, name: &str, d: usize, layers: usize, heads: usize, ff_mult: usize, window: usize) -> Self {
        Temporal {
            pos: init.small(format!("{name}.pos"), &[window, d], 0.02),
            blocks: (0..layers)
                .map(|i| Block::new(init, &format!("{name}.block{i}"), d, heads, ff_mult))
                .collect(),
            norm: Norm::new(init, &format!("{name}.ln"), d),
            window,
        }
    }

    /// `z` is `[windows * window, d]`.
    pub fn forward(&self, g: &mut Graph, p: &mut Binder, ctx: &mut Ctx, z: Var) -> Result<Var> {
        let rows = g.value(z).rows();
        let windows = rows / self.window;
        let pos = p.var(g, self.pos);
        let idx = (0..rows).map(|r| r % self.window).collect();
        let pos = g.gather_rows(pos, idx)?;
        let mut x = g.add(z, pos)?;
        for b in &self.blocks {
            x = b.forward(g, p, ctx, x, windows)?;
        }
        self.norm.forward(g, p, x)
    }
}
