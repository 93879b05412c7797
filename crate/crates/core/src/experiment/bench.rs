use std::path::Path;

use super::config::{DataFormat, ExperimentConfig, MethodSpec};
use super::ingest::load_dataset;
use super::seed::child_seed;
use crate::agent::Agent;
use crate::baselines::{dvrl_lite, loo_values, tmc_shapley, DvrlConfig, Game};
use crate::data::{NoiseSpec, Samples, Split};
use crate::env::ValuationEnv;
use crate::error::{Error, Result};
use crate::estimator::{InnerConfig, InnerEstimator};
use crate::eval::{timing_harness, TimingRow};
use crate::par::Exec;

/// First `size` rows of `train`.
fn head(train: &Samples, size: usize) -> Samples {
    let rows: Vec<usize> = (0..size).collect();
    Samples {
        features: train.features.select_rows(&rows),
        labels: train.labels[..size].to_vec(),
        num_classes: train.num_classes,
        ids: train.ids[..size].to_vec(),
        noisy: train.noisy[..size].to_vec(),
    }
}

/// Inner fits one valuation of `train` costs under `method`.
pub fn valuation_fits(method: &MethodSpec, train: &Samples, validation: &Samples, inner: InnerConfig, seed: u64, exec: Exec) -> Result<usize> {
    let est = InnerEstimator::new(inner);
    let game = Game::new(train, validation, &est);
    match method {
        MethodSpec::Baseline => {
            game.value(&(0..train.len()).collect::<Vec<_>>())?;
        }
        MethodSpec::Loo => {
            loo_values(&game, exec)?;
        }
        MethodSpec::TmcShap { shapley } => {
            tmc_shapley(&game, &crate::baselines::ShapleyConfig { seed, ..shapley.clone() }, exec)?;
        }
        MethodSpec::DvrlLite { dvrl } => {
            dvrl_lite(&game, &DvrlConfig { seed, ..dvrl.clone() })?;
        }
        MethodSpec::Rlboost { agent } => {
            let mut cfg = agent.clone();
            cfg.seed = seed;
            let env = ValuationEnv::new(train, validation, est.clone(), cfg.state_size)?;
            let mut a = Agent::new(cfg, env.record_dim())?.with_exec(exec);
            a.train(&env)?;
            a.score_records(train, seed)?;
        }
    }
    Ok(est.fit_count())
}

/// Wall-clock and inner-fit count of every configured method at each
/// training-set size. Sizes take the leading rows of the (noised) training
/// split; the synthetic generator is asked for the largest size directly.
pub fn time_bench(cfg: &ExperimentConfig, sizes: &[usize], exec: Exec) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    let largest = sizes.iter().copied().max().ok_or_else(|| Error::Config("no sizes given".into()))?;
    let mut spec = cfg.dataset.clone();
    if spec.format == DataFormat::Synthetic {
        spec.synthetic.train = spec.synthetic.train.max(largest);
    }
    let rate = cfg.noise.rates.iter().copied().fold(0.0, f64::max);
    let ds = load_dataset(&spec, child_seed(cfg.master_seed, 0.0, "split", 0))?.inject_noise(&NoiseSpec::new(
        rate,
        cfg.noise.kind,
        child_seed(cfg.master_seed, rate, "noise", 0),
    ))?;
    let train = ds.part(Split::Train);
    let validation = ds.part(Split::Validation);
    if train.len() < largest {
        return Err(Error::InsufficientData {
            needed: largest,
            available: train.len(),
        });
    }
    let mut rows = Vec::new();
    for method in &cfg.methods {
        let seed = child_seed(cfg.master_seed, rate, method.name(), 0);
        rows.extend(timing_harness(method.name(), sizes, |size| {
            log::info!("time-bench {} at {size} records", method.name());
            valuation_fits(method, &head(&train, size), &validation, cfg.inner, seed, exec)
        })?);
    }
    Ok(rows)
}

pub fn write_timing_csv(rows: &[TimingRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "size", "wall_clock_s", "inner_fits"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.size.to_string(),
            format!("{:.6}", r.wall_clock_s),
            r.inner_fits.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
