//! Reduced REINFORCE valuator in the spirit of DVRL. The inner model is
//! refitted from scratch every step rather than co-trained, and the value
//! network sees each record in isolation.

use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Game;
use crate::agent::PROB_CLAMP;
use crate::autodiff::{Adam, Graph, ParamStore, Tensor};
use crate::env::record_vectors;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Ctx, Linear};
use crate::valuation::ValueReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DvrlConfig {
    pub hidden_dim: usize,
    pub batch_size: usize,
    /// Number of recent scores averaged into the reward baseline.
    pub window: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DvrlConfig {
    fn default() -> Self {
        DvrlConfig {
            hidden_dim: 32,
            batch_size: 50,
            window: 20,
            iterations: 3000,
            lr: 3e-3,
            seed: 0,
        }
    }
}

impl DvrlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("moving-average window must be at least 1".into()));
        }
        if self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("hidden_dim and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Mean of the last `window` scores, `None` before any score arrives.
pub fn moving_average(scores: &[f64], window: usize) -> Option<f64> {
    if scores.is_empty() || window == 0 {
        return None;
    }
    let tail = &scores[scores.len().saturating_sub(window)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

struct ValueNet {
    params: ParamStore,
    hidden: Linear,
    out: Linear,
}

impl ValueNet {
    fn new(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamStore::new();
        let hidden = Linear::new(&mut params, "dvrl.hidden", input_dim, hidden_dim, rng);
        let out = Linear::new(&mut params, "dvrl.out", hidden_dim, 1, rng);
        ValueNet { params, hidden, out }
    }

    fn probs(&self, ctx: &Ctx, x: &Matrix) -> Result<crate::autodiff::Var> {
        let g = ctx.graph;
        let input = g.constant(Tensor::matrix(x.rows(), x.cols(), x.as_slice().to_vec())?);
        let h = g.relu(self.hidden.forward(ctx, input)?);
        let logits = g.reshape(self.out.forward(ctx, h)?, &[x.rows()])?;
        Ok(g.clip(g.sigmoid(logits), PROB_CLAMP, 1.0 - PROB_CLAMP))
    }
}

/// Train the selector and return its selection probability per record.
pub fn dvrl_lite(game: &Game, cfg: &DvrlConfig) -> Result<ValueReport> {
    cfg.validate()?;
    let train = game.train;
    let n = train.len();
    if n == 0 {
        return Err(Error::Empty("training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input_dim = train.dim() + train.num_classes;
    let mut net = ValueNet::new(input_dim, cfg.hidden_dim, &mut rng);
    let mut opt = Adam::new(cfg.lr);
    let batch = cfg.batch_size.min(n);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(cfg.window);

    for _ in 0..cfg.iterations {
        let rows = index::sample(&mut rng, n, batch).into_vec();
        let x = record_vectors(train, &rows);
        let g = Graph::new();
        let ctx = Ctx::new(&g, &net.params, true);
        let p = net.probs(&ctx, &x)?;
        let probs = g.data(p);
        let actions: Vec<f64> = probs
            .iter()
            .map(|&q| if rng.random::<f64>() < q { 1.0 } else { 0.0 })
            .collect();
        let selected: Vec<usize> = rows
            .iter()
            .zip(&actions)
            .filter(|(_, &a)| a == 1.0)
            .map(|(&r, _)| r)
            .collect();
        let score = game.value(&selected)?;
        let history: Vec<f64> = recent.iter().copied().collect();
        let advantage = moving_average(&history, cfg.window).map_or(0.0, |b| score - b);
        if recent.len() == cfg.window {
            recent.pop_front();
        }
        recent.push_back(score);
        if advantage == 0.0 {
            continue;
        }

        let a = g.constant(Tensor::vector(actions.clone()));
        let not_a = g.constant(Tensor::vector(actions.iter().map(|v| 1.0 - v).collect()));
        let log_p = g.log(p);
        let log_q = g.log(g.add_scalar(g.neg(p), 1.0));
        let logp = g.add(g.mul(a, log_p)?, g.mul(not_a, log_q)?)?;
        let loss = g.scale(g.sum(logp), -advantage);
        g.backward(loss)?;
        net.params.zero_grads();
        net.params.absorb(&g)?;
        opt.step(&mut net.params)?;
    }

    let g = Graph::new();
    let ctx = Ctx::new(&g, &net.params, false);
    let values = g.data(net.probs(&ctx, &record_vectors(train, &(0..n).collect::<Vec<_>>()))?);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("dvrl_lite value of record {i}")));
    }
    Ok(ValueReport::new("dvrl_lite", values))
}
