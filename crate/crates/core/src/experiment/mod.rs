//! Config-driven experiment grid: every (noise rate, method, run) cell gets
//! its own child seed, noise draw and output rows, followed by aggregation
//! and plots. Also the ingestion and timing entry points used by the CLI.

mod bench;
mod config;
mod ingest;
mod run;
mod seed;

pub use bench::{time_bench, valuation_fits, write_timing_csv};
pub use config::{DataFormat, DatasetSpec, ExperimentConfig, MethodSpec, NoiseGrid};
pub use ingest::{ingest, inject_noise_file, load_dataset, load_source, prepare, IngestOptions, CANONICAL_FILE, MANIFEST_FILE};
pub use run::{
    read_runs, report, run_config_file, run_experiment, CellFailure, ExperimentOutcome, ReportOutcome, RunOptions,
    FAILURES_FILE, ROC_FILE, RUNS_FILE, SCORES_FILE, SELECTION_THRESHOLD, VALUES_FILE,
};
pub use seed::child_seed;

#[cfg(test)]
mod tests;
