use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::Result;

/// Graph plus parameter store for one forward pass. With `train` off the
/// parameters enter as constants and no gradient bookkeeping is done.
pub struct Ctx<'a> {
    pub graph: &'a Graph,
    pub params: &'a ParamStore,
    pub train: bool,
}

impl<'a> Ctx<'a> {
    pub fn new(graph: &'a Graph, params: &'a ParamStore, train: bool) -> Self {
        Ctx {
            graph,
            params,
            train,
        }
    }

    pub fn p(&self, id: ParamId) -> Var {
        if self.train {
            self.params.bind(self.graph, id)
        } else {
            self.graph.constant(self.params.get(id).clone())
        }
    }
}

fn uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Affine map `x W + b`, `W` stored `in×out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (input_dim.max(1) as f64).sqrt();
        let w = Tensor::matrix(input_dim, output_dim, uniform(rng, input_dim * output_dim, bound))
            .expect("sized");
        let b = Tensor::vector(uniform(rng, output_dim, bound));
        Linear {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), b),
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.graph;
        g.add(g.matmul(x, ctx.p(self.weight))?, ctx.p(self.bias))
    }
}

/// Layer normalisation over the last axis with learned gain and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::vector(vec![1.0; dim])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<Var> {
        let g = ctx.graph;
        let n = g.layer_norm(x, LAYER_NORM_EPS)?;
        g.add(g.mul(n, ctx.p(self.gamma))?, ctx.p(self.beta))
    }
}

/// Multi-head self-attention over a `[tokens, model_dim]` matrix. No mask and
/// no positional information: the output is equivariant to token order.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        SelfAttention {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            out: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
        }
    }

    /// Returns the attended output and each head's `[tokens, tokens]` weights.
    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<(Var, Vec<Var>)> {
        let g = ctx.graph;
        let dim = self.query.output_dim;
        let dk = dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let q = self.query.forward(ctx, x)?;
        let k = self.key.forward(ctx, x)?;
        let v = self.value.forward(ctx, x)?;
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let qh = g.slice(q, 1, lo, hi)?;
            let kh = g.slice(k, 1, lo, hi)?;
            let vh = g.slice(v, 1, lo, hi)?;
            let scores = g.scale(g.matmul(qh, g.transpose(kh)?)?, scale);
            let attn = g.softmax(scores)?;
            outs.push(g.matmul(attn, vh)?);
            weights.push(attn);
        }
        let merged = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat(&outs, 1)?
        };
        Ok((self.out.forward(ctx, merged)?, weights))
    }
}

/// Post-norm transformer encoder block:
/// `x = LN(x + MHA(x)); x = LN(x + FF(x))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    attention: SelfAttention,
    norm1: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
    norm2: LayerNorm,
}

impl EncoderBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ff_hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        EncoderBlock {
            attention: SelfAttention::new(store, &format!("{name}.attn"), dim, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            ff_in: Linear::new(store, &format!("{name}.ff1"), dim, ff_hidden, rng),
            ff_out: Linear::new(store, &format!("{name}.ff2"), ff_hidden, dim, rng),
            norm2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: Var) -> Result<(Var, Vec<Var>)> {
        let g = ctx.graph;
        let (a, weights) = self.attention.forward(ctx, x)?;
        let x = self.norm1.forward(ctx, g.add(x, a)?)?;
        let h = g.gelu(self.ff_in.forward(ctx, x)?);
        let f = self.ff_out.forward(ctx, h)?;
        Ok((self.norm2.forward(ctx, g.add(x, f)?)?, weights))
    }
}

/// Learnable vector drawn from `N(0, std²)`.
pub fn gaussian_param(store: &mut ParamStore, name: &str, dim: usize, std: f64, rng: &mut impl Rng) -> ParamId {
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..dim).map(|_| normal.sample(rng)).collect();
    store.add(name, Tensor::vector(data))
}
