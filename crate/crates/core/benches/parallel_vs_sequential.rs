use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dvforge::agent::{Agent, AgentConfig};
use dvforge::baselines::{loo_values, tmc_shapley, Game, ShapleyConfig};
use dvforge::data::{two_gaussians, Samples, Split, TwoGaussians};
use dvforge::env::ValuationEnv;
use dvforge::estimator::InnerEstimator;
use dvforge::par::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn task(train: usize) -> (Samples, Samples) {
    let ds = two_gaussians(&TwoGaussians {
        train,
        validation: 300,
        test: 10,
        ..TwoGaussians::default()
    })
    .unwrap();
    (ds.part(Split::Train), ds.part(Split::Validation))
}

fn loo(c: &mut Criterion) {
    let mut group = c.benchmark_group("loo");
    for n in [100, 200] {
        let (train, val) = task(n);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &exec, |b, &exec| {
                b.iter(|| {
                    let est = InnerEstimator::default();
                    black_box(loo_values(&Game::new(&train, &val, &est), exec).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn tmc(c: &mut Criterion) {
    let (train, val) = task(100);
    let cfg = ShapleyConfig {
        max_permutations: 20,
        seed: 1,
        ..ShapleyConfig::default()
    };
    let mut group = c.benchmark_group("tmc_shapley");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                let est = InnerEstimator::default();
                black_box(tmc_shapley(&Game::new(&train, &val, &est), &cfg, exec).unwrap())
            })
        });
    }
    group.finish();
}

fn agent_rollout(c: &mut Criterion) {
    let (train, val) = task(1000);
    let cfg = AgentConfig {
        state_size: 100,
        model_dim: 32,
        num_layers: 2,
        ff_hidden_dim: 64,
        rollout_size: 16,
        train_batch: 16,
        ..AgentConfig::default()
    };
    let env = ValuationEnv::new(&train, &val, InnerEstimator::default(), cfg.state_size).unwrap();
    let mut group = c.benchmark_group("agent");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("rollout_and_update", name), |b| {
            let mut agent = Agent::new(cfg.clone(), env.record_dim()).unwrap().with_exec(exec);
            b.iter(|| {
                let samples = agent.collect_rollout(&env, cfg.rollout_size).unwrap();
                black_box(agent.update(&samples).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = loo, tmc, agent_rollout
}
criterion_main!(benches);
