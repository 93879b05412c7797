use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodSpec};
use super::ingest::load_dataset;
use super::seed::child_seed;
use crate::agent::{Agent, TrainingLog};
use crate::baselines::{dvrl_lite, loo_values, threshold_sweep, tmc_shapley, DvrlConfig, Game};
use crate::data::{Dataset, NoiseSpec, Samples, Split};
use crate::env::ValuationEnv;
use crate::error::{Error, Result};
use crate::estimator::{InnerConfig, InnerEstimator};
use crate::eval::{aggregate_runs, render_plots, roc_auc, write_summary_csv, write_summary_json, CellSummary, RocCurve, RunRecord};
use crate::nn::PolicyValueNet;
use crate::par::{self, Exec};
use crate::valuation::ValueReport;

/// Probability above which RLBoost and DVRL-lite keep a record.
pub const SELECTION_THRESHOLD: f64 = 0.5;

pub const SCORES_FILE: &str = "scores.csv";
pub const VALUES_FILE: &str = "values.csv";
pub const ROC_FILE: &str = "roc.csv";
pub const RUNS_FILE: &str = "runs.jsonl";
pub const FAILURES_FILE: &str = "failures.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub exec: Exec,
    /// Forces sequential execution and records wall-clock times as 0 so that
    /// every output file is reproducible byte for byte.
    pub deterministic: bool,
}

impl RunOptions {
    fn exec(&self) -> Exec {
        if self.deterministic {
            Exec::Sequential
        } else {
            self.exec
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub method: String,
    pub noise_rate: f64,
    pub run: usize,
    pub attempts: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, Copy)]
struct Cell<'a> {
    noise_rate: f64,
    method: &'a MethodSpec,
    run: usize,
}

impl Cell<'_> {
    fn stem(&self) -> String {
        format!("{}_n{}_r{}", self.method.name(), self.noise_rate, self.run)
    }
}

struct CellOutput {
    record: RunRecord,
    ids: Vec<usize>,
    noisy: Vec<bool>,
    curve: Option<RocCurve>,
    log: Option<TrainingLog>,
    net: Option<PolicyValueNet>,
}

/// Test accuracy of a fit on `rows`, `None` when the subset is unfittable.
fn test_score(train: &Samples, test: &Samples, est: &InnerEstimator, rows: &[usize]) -> Result<Option<f64>> {
    est.score_rows(&train.features, &train.labels, rows, train.num_classes, &test.features, &test.labels)
}

struct Parts {
    train: Samples,
    validation: Samples,
    test: Samples,
}

fn run_rlboost(
    agent_cfg: &crate::agent::AgentConfig,
    parts: &Parts,
    est: &InnerEstimator,
    seed: u64,
    exec: Exec,
) -> Result<(ValueReport, TrainingLog, PolicyValueNet)> {
    let mut cfg = agent_cfg.clone();
    cfg.seed = seed;
    let env = ValuationEnv::new(&parts.train, &parts.validation, est.clone(), cfg.state_size)?
        .with_reward_scale(cfg.reward_scale);
    let mut agent = Agent::new(cfg, env.record_dim())?.with_exec(exec);
    let log = agent.train(&env)?;
    let report = agent.score_records(&parts.train, seed ^ 0x5c0e)?;
    Ok((report, log, agent.net))
}

/// One DVRL-lite attempt; an unfittable selection counts as a failure.
fn run_dvrl(cfg: &DvrlConfig, parts: &Parts, est: &InnerEstimator, seed: u64) -> Result<(ValueReport, f64)> {
    let game = Game::new(&parts.train, &parts.validation, est);
    let report = dvrl_lite(&game, &DvrlConfig { seed, ..cfg.clone() })?;
    let rows = report.select_above(SELECTION_THRESHOLD);
    match test_score(&parts.train, &parts.test, est, &rows)? {
        Some(acc) => Ok((report, acc)),
        None => Err(Error::SingleClass),
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    base: &Dataset,
    cell: Cell,
    exec: Exec,
    deterministic: bool,
) -> std::result::Result<CellOutput, (usize, Error)> {
    let noise_seed = child_seed(cfg.master_seed, cell.noise_rate, "noise", cell.run);
    let ds = base
        .clone()
        .inject_noise(&NoiseSpec::new(cell.noise_rate, cfg.noise.kind, noise_seed))
        .map_err(|e| (1, e))?;
    let parts = Parts {
        train: ds.part(Split::Train),
        validation: ds.part(Split::Validation),
        test: ds.part(Split::Test),
    };
    let name = cell.method.name();
    let seed = child_seed(cfg.master_seed, cell.noise_rate, name, cell.run);
    let est = InnerEstimator::new(InnerConfig { seed, ..cfg.inner });
    let game = Game::new(&parts.train, &parts.validation, &est);
    let all: Vec<usize> = (0..parts.train.len()).collect();
    let started = Instant::now();
    let mut train_log = None;
    let mut net = None;
    let mut attempts = 1;

    let outcome: Result<(Vec<f64>, f64)> = (|| match cell.method {
        MethodSpec::Baseline => Ok((Vec::new(), test_score(&parts.train, &parts.test, &est, &all)?.unwrap_or(0.0))),
        MethodSpec::Rlboost { agent } => {
            let (report, l, n) = run_rlboost(agent, &parts, &est, seed, exec)?;
            train_log = Some(l);
            net = Some(n);
            let rows = report.select_above(SELECTION_THRESHOLD);
            let acc = test_score(&parts.train, &parts.test, &est, &rows)?.unwrap_or(0.0);
            Ok((report.values, acc))
        }
        MethodSpec::Loo => {
            let report = loo_values(&game, exec)?;
            let sweep = threshold_sweep(&report.values, &game, &parts.test, exec)?;
            Ok((report.values, sweep.final_test_score))
        }
        MethodSpec::TmcShap { shapley } => {
            let mut sc = shapley.clone();
            sc.seed = seed;
            let tmc = tmc_shapley(&game, &sc, exec)?;
            let sweep = threshold_sweep(&tmc.values.values, &game, &parts.test, exec)?;
            Ok((tmc.values.values, sweep.final_test_score))
        }
        MethodSpec::DvrlLite { dvrl } => {
            let mut last = None;
            for attempt in 0..=cfg.dvrl_retries {
                attempts = attempt + 1;
                let s = if attempt == 0 {
                    seed
                } else {
                    child_seed(seed, cell.noise_rate, "dvrl_lite retry", attempt)
                };
                match run_dvrl(dvrl, &parts, &est, s) {
                    Ok((report, acc)) => return Ok((report.values, acc)),
                    Err(e) => {
                        log::warn!("{}: dvrl_lite attempt {} failed: {e}", cell.stem(), attempt + 1);
                        last = Some(e);
                    }
                }
            }
            Err(last.expect("at least one attempt"))
        }
    })();
    let (values, test_accuracy) = outcome.map_err(|e| (attempts, e))?;
    let elapsed = started.elapsed().as_secs_f64();
    log::info!("{}: test accuracy {test_accuracy:.4} in {elapsed:.1}s", cell.stem());

    let curve = if !values.is_empty() && parts.train.noisy.iter().any(|&b| b) && parts.train.noisy.iter().any(|&b| !b) {
        Some(roc_auc(&values, &parts.train.noisy).map_err(|e| (attempts, e))?)
    } else {
        None
    };
    Ok(CellOutput {
        record: RunRecord {
            method: name.to_string(),
            noise_rate: cell.noise_rate,
            run_seed: seed,
            test_accuracy,
            auc: curve.as_ref().map(|c| c.auc),
            wall_clock_s: if deterministic { 0.0 } else { elapsed },
            inner_fit_count: est.fit_count(),
            values,
        },
        ids: parts.train.ids.clone(),
        noisy: parts.train.noisy.clone(),
        curve,
        log: train_log,
        net,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn finish(mut w: csv::Writer<BufWriter<fs::File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_outputs(dir: &Path, outputs: &[CellOutput]) -> Result<()> {
    let path = dir.join(SCORES_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "noise_rate", "seed", "test_accuracy", "wall_clock_s"])?;
    for o in outputs {
        let r = &o.record;
        w.write_record([
            r.method.clone(),
            r.noise_rate.to_string(),
            r.run_seed.to_string(),
            r.test_accuracy.to_string(),
            r.wall_clock_s.to_string(),
        ])?;
    }
    finish(w, &path)?;

    let path = dir.join(VALUES_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "noise_rate", "seed", "record_id", "value", "is_noisy"])?;
    for o in outputs {
        let r = &o.record;
        for (i, v) in r.values.iter().enumerate() {
            w.write_record([
                r.method.clone(),
                r.noise_rate.to_string(),
                r.run_seed.to_string(),
                o.ids[i].to_string(),
                v.to_string(),
                u8::from(o.noisy[i]).to_string(),
            ])?;
        }
    }
    finish(w, &path)?;

    let path = dir.join(ROC_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "noise_rate", "seed", "fpr", "tpr"])?;
    for o in outputs {
        if let Some(c) = &o.curve {
            for (f, t) in c.fpr.iter().zip(&c.tpr) {
                w.write_record([
                    o.record.method.clone(),
                    o.record.noise_rate.to_string(),
                    o.record.run_seed.to_string(),
                    f.to_string(),
                    t.to_string(),
                ])?;
            }
        }
    }
    finish(w, &path)?;

    let path = dir.join(RUNS_FILE);
    let mut text = String::new();
    for o in outputs {
        let slim = RunRecord {
            values: Vec::new(),
            ..o.record.clone()
        };
        text.push_str(&serde_json::to_string(&slim)?);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    for o in outputs {
        let stem = format!("{}_n{}_s{}", o.record.method, o.record.noise_rate, o.record.run_seed);
        if let Some(net) = &o.net {
            net.save(&dir.join("checkpoints"), &stem)?;
        }
        if let Some(log) = &o.log {
            let logs = dir.join("logs");
            fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
            log.write_jsonl(&logs.join(format!("{stem}.jsonl")))?;
        }
    }
    Ok(())
}

/// Run every (noise rate, method, run) cell of `cfg`, write the per-run
/// files and then the aggregate report. A failing cell is recorded in
/// `failures.json` and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let exec = opts.exec();
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(dir.join("config.toml"), e))?;

    let base = load_dataset(&cfg.dataset, child_seed(cfg.master_seed, 0.0, "split", 0))?;
    let mut cells = Vec::new();
    for &noise_rate in &cfg.noise.rates {
        for method in &cfg.methods {
            for run in 0..cfg.runs_per_cell {
                cells.push(Cell {
                    noise_rate,
                    method,
                    run,
                });
            }
        }
    }
    log::info!("running {} cells into {}", cells.len(), dir.display());
    let results = par::map_slice(exec, &cells, |&cell| run_cell(cfg, &base, cell, exec, opts.deterministic));

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        match res {
            Ok(o) => outputs.push(o),
            Err((attempts, e)) => {
                log::error!("{} failed: {e}", cell.stem());
                failures.push(CellFailure {
                    method: cell.method.name().to_string(),
                    noise_rate: cell.noise_rate,
                    run: cell.run,
                    attempts,
                    error: e.to_string(),
                });
            }
        }
    }
    write_outputs(&dir, &outputs)?;
    let failures_path = dir.join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        fs::write(&failures_path, serde_json::to_string_pretty(&failures)? + "\n")
            .map_err(|e| Error::io(&failures_path, e))?;
    }
    report(&dir)?;
    Ok(ExperimentOutcome {
        output_dir: dir,
        records: outputs.into_iter().map(|o| o.record).collect(),
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub cells: Vec<CellSummary>,
    pub plots: Vec<PathBuf>,
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(out)
}

type RunKey = (String, u64, u64);

/// Per-run values and noise flags from `values.csv`, keyed by
/// (method, noise-rate bits, seed).
fn read_values(path: &Path) -> Result<BTreeMap<RunKey, (Vec<f64>, Vec<bool>)>> {
    let mut out: BTreeMap<RunKey, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::parse(line, format!("bad {what}"));
        let noise: f64 = rec[1].parse().map_err(|_| bad("noise_rate"))?;
        let seed: u64 = rec[2].parse().map_err(|_| bad("seed"))?;
        let value: f64 = rec[4].parse().map_err(|_| bad("value"))?;
        let entry = out.entry((rec[0].to_string(), noise.to_bits(), seed)).or_default();
        entry.0.push(value);
        entry.1.push(&rec[5] == "1");
    }
    Ok(out)
}

/// Method-by-noise accuracy table, `mean±std` per cell and `absent` where
/// no run finished.
fn write_table(cells: &[CellSummary], rates: &[f64], methods: &[String], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["method".to_string()];
    header.extend(rates.iter().map(|r| format!("noise_{r}")));
    w.write_record(&header)?;
    for m in methods {
        let mut row = vec![m.clone()];
        for &r in rates {
            let cell = cells.iter().find(|c| &c.method == m && c.noise_rate == r);
            row.push(match cell {
                Some(c) => format!("{:.4}±{:.4}", c.mean_accuracy, c.std_accuracy),
                None => "absent".to_string(),
            });
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Rebuild summaries, the accuracy table and plots from stored run files.
///
/// The ROC plot shows the best and worst run by AUC of each valuation method
/// at the highest noise rate.
pub fn report(dir: &Path) -> Result<ReportOutcome> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory not found"),
        ));
    }
    let records = read_runs(&dir.join(RUNS_FILE))?;
    let cells = aggregate_runs(&records);
    write_summary_csv(&cells, &dir.join("summary.csv"))?;
    write_summary_json(&cells, &dir.join("summary.json"))?;

    let failures: Vec<CellFailure> = match fs::read_to_string(dir.join(FAILURES_FILE)) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => Vec::new(),
    };
    let mut rates: Vec<f64> = records
        .iter()
        .map(|r| r.noise_rate)
        .chain(failures.iter().map(|f| f.noise_rate))
        .collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let mut methods: Vec<String> = records
        .iter()
        .map(|r| r.method.clone())
        .chain(failures.iter().map(|f| f.method.clone()))
        .collect();
    methods.sort();
    methods.dedup();
    write_table(&cells, &rates, &methods, &dir.join("table.csv"))?;

    let values = read_values(&dir.join(VALUES_FILE))?;
    let mut curves = Vec::new();
    if let Some(&top) = rates.iter().filter(|&&r| r > 0.0).last() {
        for m in &methods {
            let mut runs: Vec<(f64, RocCurve)> = Vec::new();
            for ((method, bits, _), (v, noisy)) in &values {
                if method == m && *bits == top.to_bits() {
                    if let Ok(c) = roc_auc(v, noisy) {
                        runs.push((c.auc, c));
                    }
                }
            }
            runs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((auc, c)) = runs.last() {
                curves.push((format!("{m} best (AUC {auc:.3})"), c.clone()));
            }
            if runs.len() > 1 {
                let (auc, c) = &runs[0];
                curves.push((format!("{m} worst (AUC {auc:.3})"), c.clone()));
            }
        }
    }
    let plots = render_plots(&curves, &cells, dir)?;
    Ok(ReportOutcome { cells, plots })
}

/// Loads a config, applies an output directory override and runs it.
pub fn run_config_file(path: &Path, output_override: Option<&Path>, opts: RunOptions) -> Result<ExperimentOutcome> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(dir) = output_override {
        cfg.output_dir = dir.to_path_buf();
    }
    run_experiment(&cfg, opts)
}

