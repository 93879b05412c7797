//! One-step PPO agent: rollouts of independent state batches, advantage
//! `r - V(s)`, and clipped-ratio updates of the policy/value network.

mod loss;

pub use loss::{
    bernoulli_log_prob, entropy_bonus, generalized_advantage_estimate, policy_loss, total_loss,
    value_loss, PROB_CLAMP,
};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Graph};
use crate::data::Samples;
use crate::env::{record_vectors, SelectionMask, StateBatch, ValuationEnv};
use crate::error::{Error, Result};
use crate::nn::{CriticMode, Ctx, EncoderConfig, PolicyValueNet};
use crate::par::{self, Exec};
use crate::valuation::ValueReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub clip_epsilon: f64,
    pub c1: f64,
    pub c2: f64,
    /// Discount; must be 0 for one-step episodes.
    pub gamma: f64,
    /// Only used by the advantage helper.
    pub lambda: f64,
    pub lr: f64,
    /// Environment steps (state batches) to train for.
    pub total_steps: usize,
    /// Minibatch size in states, capped at the rollout size.
    pub train_batch: usize,
    pub epochs_per_update: usize,
    /// States collected with frozen parameters before each update.
    pub rollout_size: usize,
    pub critic_mode: CriticMode,
    pub seed: u64,
    /// Records per state batch.
    pub state_size: usize,
    pub reward_scale: f64,
    pub model_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ff_hidden_dim: usize,
    /// Global gradient-norm cap; `None` leaves gradients untouched.
    pub max_grad_norm: Option<f64>,
    /// Passes over the training set when scoring records.
    pub score_passes: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            clip_epsilon: 0.2,
            c1: 0.5,
            c2: 1e-3,
            gamma: 0.0,
            lambda: 0.95,
            lr: 3e-4,
            total_steps: 100_000,
            train_batch: 64,
            epochs_per_update: 4,
            rollout_size: 16,
            critic_mode: CriticMode::ClsSb,
            seed: 0,
            state_size: 200,
            reward_scale: 1.0,
            model_dim: 64,
            num_heads: 4,
            num_layers: 4,
            ff_hidden_dim: 128,
            max_grad_norm: None,
            score_passes: 5,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if self.c1 < 0.0 || self.c2 < 0.0 {
            return bad("c1 and c2 must be non-negative");
        }
        if self.gamma != 0.0 {
            return bad("gamma must be 0 for one-step episodes");
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if self.train_batch == 0 || self.rollout_size == 0 || self.epochs_per_update == 0 {
            return bad("train_batch, rollout_size and epochs_per_update must be positive");
        }
        if self.state_size == 0 || self.score_passes == 0 {
            return bad("state_size and score_passes must be positive");
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale must be positive");
        }
        Ok(())
    }

    pub fn encoder(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            model_dim: self.model_dim,
            num_heads: self.num_heads,
            num_layers: self.num_layers,
            ff_hidden_dim: self.ff_hidden_dim,
        }
    }
}

/// Sample a selection from per-record probabilities. Deterministic mode
/// keeps records with `p > 0.5`.
pub fn act_with_probs<R: Rng + ?Sized>(probs: &[f64], rng: &mut R, deterministic: bool) -> SelectionMask {
    let selected: Vec<bool> = probs
        .iter()
        .map(|&p| if deterministic { p > 0.5 } else { rng.random::<f64>() < p })
        .collect();
    let log_probs = probs
        .iter()
        .zip(&selected)
        .map(|(&p, &a)| bernoulli_log_prob(p, a))
        .collect();
    SelectionMask { selected, log_probs }
}

pub fn act<R: Rng + ?Sized>(
    net: &PolicyValueNet,
    state: &StateBatch,
    rng: &mut R,
    deterministic: bool,
) -> Result<SelectionMask> {
    let probs = net.probabilities(&state.vectors)?;
    Ok(act_with_probs(&probs, rng, deterministic))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSample {
    pub state: StateBatch,
    pub mask: SelectionMask,
    /// Scaled reward.
    pub reward: f64,
    pub value: f64,
    pub advantage: f64,
    pub selected_count: usize,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub update: usize,
    pub step: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub selected_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub updates: Vec<UpdateLog>,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for u in &self.updates {
            out.push_str(&serde_json::to_string(u)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Mean of `mean_reward` over a fractional window `[from, to)` of updates.
    pub fn mean_reward_between(&self, from: f64, to: f64) -> f64 {
        let n = self.updates.len();
        let a = ((n as f64) * from).floor() as usize;
        let b = (((n as f64) * to).ceil() as usize).clamp(a + 1, n.max(a + 1));
        let w = &self.updates[a.min(n)..b.min(n)];
        w.iter().map(|u| u.mean_reward).sum::<f64>() / w.len().max(1) as f64
    }
}

#[derive(Default)]
struct Stats {
    policy: f64,
    value: f64,
    entropy: f64,
    clipped: usize,
    records: usize,
    samples: usize,
}

pub struct Agent {
    pub config: AgentConfig,
    pub net: PolicyValueNet,
    pub exec: Exec,
    opt: Adam,
    rng: ChaCha8Rng,
    steps: usize,
}

impl Agent {
    pub fn new(config: AgentConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let net = PolicyValueNet::new(config.encoder(input_dim), config.critic_mode, config.seed)?;
        Ok(Agent {
            opt: Adam::new(config.lr),
            // offset so the sampling stream differs from the init stream
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0ff5e7),
            steps: 0,
            exec: Exec::default(),
            net,
            config,
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn steps_done(&self) -> usize {
        self.steps
    }

    /// Collect `n` one-step episodes with the current parameters.
    pub fn collect_rollout(&mut self, env: &ValuationEnv, n: usize) -> Result<Vec<RolloutSample>> {
        let seeds: Vec<u64> = (0..n).map(|_| self.rng.random()).collect();
        let net = &self.net;
        let scale = env.reward_scale;
        par::map_slice(self.exec, &seeds, |&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let state = env.sample_state(&mut rng)?;
            let (probs, value) = net.evaluate(&state.vectors, state.baseline_score)?;
            let mask = act_with_probs(&probs, &mut rng, false);
            let outcome = env.step(&state, &mask.selected)?;
            let reward = outcome.reward * scale;
            Ok(RolloutSample {
                state,
                mask,
                reward,
                value,
                advantage: reward - value,
                selected_count: outcome.selected_count,
            })
        })
        .into_iter()
        .collect()
    }

    fn sample_grads(&self, s: &RolloutSample, weight: f64) -> Result<(Vec<(usize, Vec<f64>)>, Stats)> {
        let g = Graph::new();
        let ctx = Ctx::new(&g, self.net.params(), true);
        let out = self.net.forward(&ctx, &s.state.vectors, s.state.baseline_score)?;
        let l = loss::sample_loss(
            &g,
            out.probs,
            out.value,
            &s.mask.selected,
            &s.mask.log_probs,
            s.advantage,
            s.reward,
            &self.config,
        )?;
        let total = g.scalar(l.total);
        if !total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {total} (policy {}, value {}, entropy {}, reward {}, advantage {})",
                g.scalar(l.policy),
                g.scalar(l.value),
                g.scalar(l.entropy),
                s.reward,
                s.advantage
            )));
        }
        g.backward(g.scale(l.total, weight))?;
        let eps = self.config.clip_epsilon;
        let ratios = g.data(l.ratio);
        let stats = Stats {
            policy: g.scalar(l.policy),
            value: g.scalar(l.value),
            entropy: g.scalar(l.entropy),
            clipped: ratios.iter().filter(|r| (*r - 1.0).abs() > eps).count(),
            records: ratios.len(),
            samples: 1,
        };
        Ok((g.param_grads(), stats))
    }

    /// Several epochs of minibatch updates over one rollout.
    pub fn update(&mut self, samples: &[RolloutSample]) -> Result<(f64, f64, f64, f64)> {
        let batch = self.config.train_batch.min(samples.len()).max(1);
        let mut totals = Stats::default();
        for _ in 0..self.config.epochs_per_update {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(batch) {
                let weight = 1.0 / chunk.len() as f64;
                let this = &*self;
                let results = par::map_slice(self.exec, chunk, |&i| this.sample_grads(&samples[i], weight));
                let params = self.net.params_mut();
                params.zero_grads();
                for r in results {
                    let (grads, st) = r?;
                    params.accumulate(&grads)?;
                    totals.policy += st.policy;
                    totals.value += st.value;
                    totals.entropy += st.entropy;
                    totals.clipped += st.clipped;
                    totals.records += st.records;
                    totals.samples += st.samples;
                }
                if let Some(max) = self.config.max_grad_norm {
                    params.clip_grad_norm(max);
                }
                self.opt.step(params)?;
                params.zero_grads();
            }
        }
        let n = totals.samples.max(1) as f64;
        Ok((
            totals.policy / n,
            totals.value / n,
            totals.entropy / n,
            totals.clipped as f64 / totals.records.max(1) as f64,
        ))
    }

    /// Train until `total_steps` environment steps have been taken, calling
    /// `on_update` after every update.
    pub fn train_with<F: FnMut(&UpdateLog)>(&mut self, env: &ValuationEnv, mut on_update: F) -> Result<TrainingLog> {
        if env.record_dim() != self.net.config().input_dim {
            return Err(Error::ShapeMismatch {
                op: "train",
                lhs: vec![env.record_dim()],
                rhs: vec![self.net.config().input_dim],
            });
        }
        let mut log = TrainingLog::default();
        while self.steps < self.config.total_steps {
            let n = self.config.rollout_size.min(self.config.total_steps - self.steps);
            let samples = self.collect_rollout(env, n)?;
            self.steps += n;
            let (policy_loss, value_loss, entropy, clip_fraction) = self.update(&samples)?;
            let records: usize = samples.iter().map(|s| s.state.len()).sum();
            let entry = UpdateLog {
                update: log.updates.len(),
                step: self.steps,
                mean_reward: samples.iter().map(|s| s.reward).sum::<f64>() / n as f64,
                policy_loss,
                value_loss,
                entropy,
                clip_fraction,
                selected_fraction: samples.iter().map(|s| s.selected_count).sum::<usize>() as f64
                    / records as f64,
            };
            on_update(&entry);
            log.updates.push(entry);
        }
        Ok(log)
    }

    pub fn train(&mut self, env: &ValuationEnv) -> Result<TrainingLog> {
        self.train_with(env, |_| {})
    }

    pub fn score_records(&self, train: &Samples, seed: u64) -> Result<ValueReport> {
        score_records(
            &self.net,
            train,
            self.config.state_size,
            self.config.score_passes,
            seed,
            self.exec,
        )
    }
}

/// Mean selection probability of every record over `passes` random
/// partitions into state-sized batches. A trailing partial batch is filled
/// with the last records of the permutation so that every batch has the same
/// size; only the records not yet scored in that pass are credited.
pub fn score_records(
    net: &PolicyValueNet,
    train: &Samples,
    state_size: usize,
    passes: usize,
    seed: u64,
    exec: Exec,
) -> Result<ValueReport> {
    if passes == 0 {
        return Err(Error::InvalidArgument("passes must be at least 1".into()));
    }
    let m = train.len();
    if m == 0 {
        return Err(Error::Empty("no records to score".into()));
    }
    let n = state_size.min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_pass = Vec::with_capacity(passes);
    for _ in 0..passes {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        // (batch ids, index of first id to credit)
        let batches: Vec<(Vec<usize>, usize)> = (0..m.div_ceil(n))
            .map(|b| {
                let start = b * n;
                if start + n <= m {
                    (perm[start..start + n].to_vec(), 0)
                } else {
                    (perm[m - n..].to_vec(), start - (m - n))
                }
            })
            .collect();
        let probs: Vec<Result<Vec<f64>>> = par::map_slice(exec, &batches, |(ids, _)| {
            net.probabilities(&record_vectors(train, ids))
        });
        let mut values = vec![0.0; m];
        for ((ids, credit_from), p) in batches.iter().zip(probs) {
            let p = p?;
            for k in *credit_from..ids.len() {
                values[ids[k]] = p[k];
            }
        }
        per_pass.push(values);
    }
    let values = (0..m)
        .map(|i| per_pass.iter().map(|v| v[i]).sum::<f64>() / passes as f64)
        .collect();
    Ok(ValueReport {
        method: "rlboost".into(),
        values,
        per_pass,
    })
}
