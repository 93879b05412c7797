use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dvforge::data::{NoiseKind, NoiseSpec, SplitCounts};
use dvforge::experiment::{
    self, DataFormat, ExperimentConfig, IngestOptions, MethodSpec, RunOptions,
};
use dvforge::par::{self, Exec};

/// Environment variable that overrides every output directory.
const OUT_ENV: &str = "DVFORGE_OUT";

#[derive(Debug, Parser)]
#[command(name = "dvforge", version, about = "Data valuation experiments: RLBoost agent, LOO, TMC-Shapley, DVRL-lite")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed; overrides the config's `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Single worker, zeroed timings: byte-identical outputs across reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory override.
    #[arg(long = "out-dir", env = OUT_ENV, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a dataset, split/binarize/standardize it and write a manifest.
    Ingest {
        source: PathBuf,
        #[arg(long, default_value = "libsvm")]
        format: DataFormat,
        /// Split sizes as `train,validation,test`.
        #[arg(long, value_parser = parse_splits)]
        splits: SplitCounts,
        /// Feature count for LibSVM input.
        #[arg(long)]
        dim: Option<usize>,
        /// Map this class to 1 and every other class to 0.
        #[arg(long)]
        binarize: Option<usize>,
        #[arg(long)]
        standardize: bool,
    },
    /// Corrupt train labels of an ingested dataset.
    InjectNoise {
        manifest: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value = "binary_flip")]
        kind: NoiseKind,
    },
    /// Run every cell of an experiment config.
    Run { config: PathBuf },
    /// Rebuild summaries and plots from a finished run directory.
    Report { dir: Option<PathBuf> },
    /// Wall-clock and inner-fit counts per method over training-set sizes.
    TimeBench {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
        sizes: Vec<usize>,
        /// Comma-separated methods; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
}

fn parse_splits(s: &str) -> Result<SplitCounts, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad split size {p:?}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [train, validation, test] => Ok(SplitCounts {
            train,
            validation,
            test,
        }),
        _ => Err("expected train,validation,test".into()),
    }
}

fn out_dir(global: &Global, fallback: &Path) -> PathBuf {
    global.out.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn options(global: &Global) -> RunOptions {
    RunOptions {
        exec: if global.jobs == 1 { Exec::Sequential } else { Exec::Parallel },
        deterministic: global.deterministic,
    }
}

fn load_config(path: &Path, global: &Global) -> dvforge::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = global.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = &global.out {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

/// Exit status 2 flags a run in which some cells failed.
fn execute(cli: Cli) -> dvforge::Result<ExitCode> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest {
            source,
            format,
            splits,
            dim,
            binarize,
            standardize,
        } => {
            let opts = IngestOptions {
                format,
                dim,
                splits,
                seed: g.seed.unwrap_or(0),
                binarize,
                standardize,
            };
            let (m, path) = experiment::ingest(&source, &opts, &out_dir(g, Path::new("dvforge-data")))?;
            println!(
                "{}: {} records, train {} / validation {} / test {}, sha256 {}",
                path.display(),
                m.records,
                m.splits.train,
                m.splits.validation,
                m.splits.test,
                m.sha256
            );
        }
        Command::InjectNoise { manifest, rate, kind } => {
            let spec = NoiseSpec::new(rate, kind, g.seed.unwrap_or(0));
            spec.validate()?;
            let (m, path) = experiment::inject_noise_file(&manifest, &spec, &out_dir(g, Path::new("dvforge-noisy")))?;
            println!("{}: noise rate {rate} ({kind}), sha256 {}", path.display(), m.sha256);
        }
        Command::Run { config } => {
            let cfg = load_config(&config, g)?;
            let opts = options(g);
            let jobs = if g.deterministic { 1 } else { g.jobs };
            let outcome = par::with_jobs(jobs, || experiment::run_experiment(&cfg, opts))?;
            println!(
                "{}: {} runs finished, {} failed",
                outcome.output_dir.display(),
                outcome.records.len(),
                outcome.failures.len()
            );
            if !outcome.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { dir } => {
            let dir = dir
                .or_else(|| g.out.clone())
                .ok_or_else(|| dvforge::Error::Config(format!("report needs a directory or {OUT_ENV}")))?;
            let outcome = experiment::report(&dir)?;
            println!("{}: {} cells, {} plots", dir.display(), outcome.cells.len(), outcome.plots.len());
        }
        Command::TimeBench {
            config,
            sizes,
            methods,
        } => {
            let mut cfg = load_config(&config, g)?;
            if !methods.is_empty() {
                cfg.methods = methods
                    .iter()
                    .map(|name| {
                        cfg.methods
                            .iter()
                            .find(|m| m.name() == name)
                            .cloned()
                            .map_or_else(|| MethodSpec::by_name(name), Ok)
                    })
                    .collect::<dvforge::Result<_>>()?;
            }
            let opts = options(g);
            let exec = if opts.deterministic { Exec::Sequential } else { opts.exec };
            let rows = par::with_jobs(g.jobs, || experiment::time_bench(&cfg, &sizes, exec))?;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| dvforge::Error::Io {
                path: cfg.output_dir.clone(),
                source: e,
            })?;
            let path = cfg.output_dir.join("timing.csv");
            experiment::write_timing_csv(&rows, &path)?;
            for r in &rows {
                println!("{:<10} {:>6} {:>10.3}s {:>8} fits", r.method, r.size, r.wall_clock_s, r.inner_fits);
            }
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
