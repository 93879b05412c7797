use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::layers::{gaussian_param, Ctx, EncoderBlock, Linear};

/// Shape of the policy/value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Width of each record vector (features plus one-hot label).
    pub input_dim: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    /// Number of stacked encoder blocks.
    pub num_layers: usize,
    pub ff_hidden_dim: usize,
}

impl EncoderConfig {
    pub fn new(input_dim: usize) -> Self {
        EncoderConfig {
            input_dim,
            model_dim: 64,
            num_heads: 4,
            num_layers: 4,
            ff_hidden_dim: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.model_dim == 0 || self.ff_hidden_dim == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.num_heads == 0 || self.model_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        Ok(())
    }
}

/// What the critic head sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CriticMode {
    /// Baseline validation score only.
    #[serde(rename = "SB")]
    Sb,
    /// Encoder output at the CLS position only.
    #[serde(rename = "CLS")]
    Cls,
    /// Both, concatenated.
    #[default]
    #[serde(rename = "CLS_SB")]
    ClsSb,
}

impl std::str::FromStr for CriticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('+', "_").as_str() {
            "SB" => Ok(CriticMode::Sb),
            "CLS" => Ok(CriticMode::Cls),
            "CLS_SB" => Ok(CriticMode::ClsSb),
            other => Err(Error::Config(format!("unknown critic mode {other:?}"))),
        }
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    /// `[N, model_dim]`
    pub record_embeddings: Var,
    /// `[model_dim]`
    pub cls_embedding: Var,
    /// `[N]` pre-sigmoid selection scores.
    pub logits: Var,
    /// `[N]` selection probabilities.
    pub probs: Var,
    /// Scalar state value.
    pub value: Var,
}

/// Vectorizer, CLS token, stacked encoders, per-record actor head and critic.
#[derive(Debug, Clone)]
pub struct PolicyValueNet {
    config: EncoderConfig,
    critic_mode: CriticMode,
    params: ParamStore,
    vectorizer: Linear,
    cls_token: ParamId,
    encoders: Vec<EncoderBlock>,
    actor_head: Linear,
    critic_hidden: Linear,
    critic_out: Linear,
}

#[derive(Serialize, Deserialize)]
struct SavedConfig {
    encoder: EncoderConfig,
    critic_mode: CriticMode,
}

impl PolicyValueNet {
    pub fn new(config: EncoderConfig, critic_mode: CriticMode, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.model_dim;
        let vectorizer = Linear::new(&mut params, "vectorizer", config.input_dim, d, &mut rng);
        let cls_token = gaussian_param(&mut params, "cls_token", d, 0.02, &mut rng);
        let encoders = (0..config.num_layers)
            .map(|l| {
                EncoderBlock::new(
                    &mut params,
                    &format!("encoder{l}"),
                    d,
                    config.num_heads,
                    config.ff_hidden_dim,
                    &mut rng,
                )
            })
            .collect();
        let actor_head = Linear::new(&mut params, "actor", d, 1, &mut rng);
        let critic_in = match critic_mode {
            CriticMode::Sb => 1,
            CriticMode::Cls => d,
            CriticMode::ClsSb => d + 1,
        };
        let critic_hidden = Linear::new(&mut params, "critic.hidden", critic_in, d, &mut rng);
        let critic_out = Linear::new(&mut params, "critic.out", d, 1, &mut rng);
        Ok(PolicyValueNet {
            config,
            critic_mode,
            params,
            vectorizer,
            cls_token,
            encoders,
            actor_head,
            critic_hidden,
            critic_out,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn critic_mode(&self) -> CriticMode {
        self.critic_mode
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn actor_head(&self) -> &Linear {
        &self.actor_head
    }

    fn check_records(&self, records: &Matrix) -> Result<()> {
        if records.rows() == 0 {
            return Err(Error::Empty("state batch has no records".into()));
        }
        if records.cols() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                op: "encode_batch",
                lhs: vec![records.rows(), records.cols()],
                rhs: vec![self.config.input_dim],
            });
        }
        Ok(())
    }

    /// Contextual record embeddings `[N, D]` and the CLS output `[D]`, plus
    /// every attention map (layer-major, then head).
    pub fn encode_batch_with_attention(
        &self,
        ctx: &Ctx,
        records: &Matrix,
    ) -> Result<(Var, Var, Vec<Var>)> {
        self.check_records(records)?;
        let g = ctx.graph;
        let n = records.rows();
        let d = self.config.model_dim;
        let x = g.constant(Tensor::matrix(n, records.cols(), records.as_slice().to_vec())?);
        let proj = self.vectorizer.forward(ctx, x)?;
        let cls = g.reshape(ctx.p(self.cls_token), &[1, d])?;
        let mut h = g.concat(&[cls, proj], 0)?;
        let mut maps = Vec::new();
        for block in &self.encoders {
            let (out, w) = block.forward(ctx, h)?;
            h = out;
            maps.extend(w);
        }
        let cls_out = g.reshape(g.slice(h, 0, 0, 1)?, &[d])?;
        let rec = g.slice(h, 0, 1, n + 1)?;
        Ok((rec, cls_out, maps))
    }

    pub fn encode_batch(&self, ctx: &Ctx, records: &Matrix) -> Result<(Var, Var)> {
        let (r, c, _) = self.encode_batch_with_attention(ctx, records)?;
        Ok((r, c))
    }

    /// Per-record pre-sigmoid scores `[N]`.
    pub fn actor_logits(&self, ctx: &Ctx, record_embeddings: Var) -> Result<Var> {
        let g = ctx.graph;
        let n = g.shape(record_embeddings)[0];
        let s = self.actor_head.forward(ctx, record_embeddings)?;
        g.reshape(s, &[n])
    }

    /// Independent Bernoulli selection probability per record.
    pub fn actor_probs(&self, ctx: &Ctx, record_embeddings: Var) -> Result<Var> {
        Ok(ctx.graph.sigmoid(self.actor_logits(ctx, record_embeddings)?))
    }

    pub fn critic_value(&self, ctx: &Ctx, cls_embedding: Var, baseline_score: f64) -> Result<Var> {
        let g = ctx.graph;
        let sb = || g.constant(Tensor::vector(vec![baseline_score]));
        let input = match self.critic_mode {
            CriticMode::Sb => sb(),
            CriticMode::Cls => cls_embedding,
            CriticMode::ClsSb => g.concat(&[cls_embedding, sb()], 0)?,
        };
        let width = g.shape(input)[0];
        let input = g.reshape(input, &[1, width])?;
        let h = g.tanh(self.critic_hidden.forward(ctx, input)?);
        let v = self.critic_out.forward(ctx, h)?;
        g.reshape(v, &[])
    }

    pub fn forward(&self, ctx: &Ctx, records: &Matrix, baseline_score: f64) -> Result<NetOutput> {
        let (record_embeddings, cls_embedding) = self.encode_batch(ctx, records)?;
        let logits = self.actor_logits(ctx, record_embeddings)?;
        let probs = ctx.graph.sigmoid(logits);
        let value = self.critic_value(ctx, cls_embedding, baseline_score)?;
        Ok(NetOutput {
            record_embeddings,
            cls_embedding,
            logits,
            probs,
            value,
        })
    }

    /// Inference-only pass: `(probabilities, value)`.
    pub fn evaluate(&self, records: &Matrix, baseline_score: f64) -> Result<(Vec<f64>, f64)> {
        let g = Graph::new();
        let ctx = Ctx::new(&g, &self.params, false);
        let out = self.forward(&ctx, records, baseline_score)?;
        Ok((g.data(out.probs), g.scalar(out.value)))
    }

    /// Inference-only selection probabilities.
    pub fn probabilities(&self, records: &Matrix) -> Result<Vec<f64>> {
        let g = Graph::new();
        let ctx = Ctx::new(&g, &self.params, false);
        let (rec, _) = self.encode_batch(&ctx, records)?;
        Ok(g.data(self.actor_probs(&ctx, rec)?))
    }

    /// Writes `<stem>.ckpt` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        autodiff::save_checkpoint(&dir.join(format!("{stem}.ckpt")), &self.params)?;
        let cfg = SavedConfig {
            encoder: self.config.clone(),
            critic_mode: self.critic_mode,
        };
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_string_pretty(&cfg)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let cfg: SavedConfig = serde_json::from_str(&text)?;
        let mut net = PolicyValueNet::new(cfg.encoder, cfg.critic_mode, 0)?;
        autodiff::load_checkpoint(&dir.join(format!("{stem}.ckpt")), &mut net.params)?;
        Ok(net)
    }
}
