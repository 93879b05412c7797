//! Metrics and reports: noise-detection ROC, per-cell aggregates, timing
//! tables and SVG plots.

mod aggregate;
mod plot;
mod roc;
mod timing;

pub use aggregate::{aggregate_runs, read_summary_json, write_summary_csv, write_summary_json, CellSummary, RunRecord};
pub use plot::{render_plots, roc_svg, score_bars_svg};
pub use roc::{mann_whitney_auc, roc_auc, RocCurve};
pub use timing::{timing_harness, TimingRow};
