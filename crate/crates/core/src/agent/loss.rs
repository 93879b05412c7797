//! Clipped-ratio PPO objective specialised to one-step episodes.

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Probabilities are clamped to this margin before any logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Log-probability of a Bernoulli decision.
pub fn bernoulli_log_prob(p: f64, taken: bool) -> f64 {
    let p = clamp_prob(p);
    if taken { p.ln() } else { (1.0 - p).ln() }
}

/// Reverse recursion `A_t = δ_t + γλ A_{t+1}`.
pub fn generalized_advantage_estimate(deltas: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(Error::Empty("advantage estimate needs at least one delta".into()));
    }
    let mut out = vec![0.0; deltas.len()];
    let mut next = 0.0;
    for t in (0..deltas.len()).rev() {
        // written so that gamma == 0 returns the delta bit for bit
        next = if gamma == 0.0 { deltas[t] } else { deltas[t] + gamma * lambda * next };
        out[t] = next;
    }
    Ok(out)
}

/// Negated mean of `min(δR, δ clip(R, 1-ε, 1+ε))` over records, with
/// `R = exp(new - old)` per record.
pub fn policy_loss(new_logprobs: &[f64], old_logprobs: &[f64], advantage: f64, clip_epsilon: f64) -> Result<f64> {
    if new_logprobs.len() != old_logprobs.len() || new_logprobs.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "policy_loss",
            lhs: vec![new_logprobs.len()],
            rhs: vec![old_logprobs.len()],
        });
    }
    let mut total = 0.0;
    for (i, (n, o)) in new_logprobs.iter().zip(old_logprobs).enumerate() {
        let r = (n - o).exp();
        if !r.is_finite() {
            return Err(Error::NonFinite(format!("probability ratio of record {i}")));
        }
        let clipped = r.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
        total += (advantage * r).min(advantage * clipped);
    }
    Ok(-total / new_logprobs.len() as f64)
}

/// Mean squared error between values and rewards.
pub fn value_loss(values: &[f64], rewards: &[f64]) -> f64 {
    let n = values.len().max(1) as f64;
    values.iter().zip(rewards).map(|(v, r)| (r - v) * (r - v)).sum::<f64>() / n
}

/// Mean Bernoulli entropy in nats.
pub fn entropy_bonus(probs: &[f64]) -> f64 {
    let n = probs.len().max(1) as f64;
    probs
        .iter()
        .map(|&p| {
            let p = clamp_prob(p);
            -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

/// Minimisation form: `policy_loss + c1 * value_loss - c2 * entropy`.
pub fn total_loss(policy_loss: f64, value_loss: f64, entropy: f64, c1: f64, c2: f64) -> f64 {
    policy_loss + c1 * value_loss - c2 * entropy
}

/// Graph nodes of one sample's loss terms.
pub(crate) struct SampleLoss {
    pub total: Var,
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
    pub ratio: Var,
}

/// Build the loss of one rollout sample from the current network outputs.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sample_loss(
    g: &Graph,
    probs: Var,
    value: Var,
    actions: &[bool],
    old_logprobs: &[f64],
    advantage: f64,
    reward: f64,
    cfg: &super::AgentConfig,
) -> Result<SampleLoss> {
    let n = actions.len();
    let taken = g.constant(Tensor::vector(actions.iter().map(|&a| f64::from(u8::from(a))).collect()));
    let not_taken = g.constant(Tensor::vector(actions.iter().map(|&a| f64::from(u8::from(!a))).collect()));
    let p = g.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let log_p = g.log(p);
    let log_q = g.log(g.add_scalar(g.neg(p), 1.0));
    let logprob = g.add(g.mul(taken, log_p)?, g.mul(not_taken, log_q)?)?;
    let old = g.constant(Tensor::vector(old_logprobs.to_vec()));
    let ratio = g.exp(g.sub(logprob, old)?);
    let unclipped = g.scale(ratio, advantage);
    let clipped = g.scale(g.clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon), advantage);
    let policy = g.neg(g.mean(g.minimum(unclipped, clipped)?));
    let err = g.add_scalar(value, -reward);
    let value_l = g.mul(err, err)?;
    let ent_terms = g.add(g.mul(p, log_p)?, g.mul(g.add_scalar(g.neg(p), 1.0), log_q)?)?;
    let entropy = g.neg(g.mean(ent_terms));
    let total = g.add(
        g.add(policy, g.scale(value_l, cfg.c1))?,
        g.scale(entropy, -cfg.c2),
    )?;
    debug_assert_eq!(g.shape(logprob), vec![n]);
    Ok(SampleLoss {
        total,
        policy,
        value: value_l,
        entropy,
        ratio,
    })
}
