//! Train the agent on a synthetic two-Gaussian task with flipped labels and
//! report how well its values separate clean from noisy records.
//!
//! Usage: `cargo run --release --example noise_detection -- noise=0.3 seed=0 steps=20000`

use std::collections::HashMap;
use std::time::Instant;

use dvforge::agent::{Agent, AgentConfig};
use dvforge::data::{two_gaussians, NoiseKind, NoiseSpec, Split, TwoGaussians};
use dvforge::env::ValuationEnv;
use dvforge::estimator::{InnerConfig, InnerEstimator, LogisticModel};
use dvforge::eval::roc_auc;

fn main() -> dvforge::Result<()> {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: f64| args.get(k).and_then(|v| v.parse().ok()).unwrap_or(d);
    let noise = get("noise", 0.3);
    let seed = get("seed", 0.0) as u64;

    let data = two_gaussians(&TwoGaussians {
        seed,
        separation: get("sep", 3.0),
        ..TwoGaussians::default()
    })?
    .inject_noise(&NoiseSpec::new(noise, NoiseKind::BinaryFlip, seed))?;
    let (train, val, test) = (data.part(Split::Train), data.part(Split::Validation), data.part(Split::Test));

    let config = AgentConfig {
        state_size: 100,
        num_layers: 2,
        model_dim: 32,
        ff_hidden_dim: get("ff", 64.0) as usize,
        total_steps: get("steps", 20_000.0) as usize,
        lr: get("lr", 3e-4),
        rollout_size: get("rollout", 16.0) as usize,
        train_batch: get("batch", 16.0) as usize,
        epochs_per_update: get("epochs", 4.0) as usize,
        reward_scale: get("scale", 1.0),
        seed,
        ..AgentConfig::default()
    };
    let inner = InnerConfig::default();
    let env = ValuationEnv::new(&train, &val, InnerEstimator::new(inner), config.state_size)?
        .with_reward_scale(config.reward_scale);
    let mut agent = Agent::new(config, env.record_dim())?;
    let start = Instant::now();
    agent.train_with(&env, |u| {
        if (u.update + 1) % 125 == 0 {
            println!(
                "step {:>6} reward {:+.4} entropy {:.3} selected {:.2} t {:.0}s",
                u.step,
                u.mean_reward,
                u.entropy,
                u.selected_fraction,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    let report = agent.score_records(&train, seed)?;
    if noise > 0.0 {
        println!("auc {:.3}", roc_auc(&report.values, &train.noisy)?.auc);
    }
    let keep = report.select_above(0.5);
    let filtered = LogisticModel::fit_rows(&train.features, &train.labels, &keep, 2, &inner)?;
    let all = LogisticModel::fit(&train.features, &train.labels, 2, &inner)?;
    println!(
        "kept {} filtered {:.4} baseline {:.4}",
        keep.len(),
        filtered.accuracy(&test.features, &test.labels)?,
        all.accuracy(&test.features, &test.labels)?
    );
    Ok(())
}
