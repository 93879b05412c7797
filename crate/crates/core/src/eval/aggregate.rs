use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub noise_rate: f64,
    pub run_seed: u64,
    pub test_accuracy: f64,
    /// Clean-vs-noisy AUC of the values, when both classes exist.
    pub auc: Option<f64>,
    pub wall_clock_s: f64,
    pub inner_fit_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub noise_rate: f64,
    pub runs: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_accuracy: f64,
    /// Set when the cell has one run, so its std carries no information.
    pub single_run: bool,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub mean_wall_clock_s: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Per (method, noise rate) mean and sample std, sorted by method then noise.
pub fn aggregate_runs(records: &[RunRecord]) -> Vec<CellSummary> {
    // noise rates are keyed by their bit pattern; all are non-negative so the
    // integer order matches the numeric order
    let mut cells: BTreeMap<(String, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.method.clone(), r.noise_rate.to_bits()))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|((method, bits), mut runs)| {
            // canonical order inside the cell so sums do not depend on input order
            runs.sort_by(|a, b| {
                a.run_seed
                    .cmp(&b.run_seed)
                    .then(a.test_accuracy.total_cmp(&b.test_accuracy))
            });
            let acc: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            let aucs: Vec<f64> = runs.iter().filter_map(|r| r.auc).collect();
            let (mean_auc, std_auc) = if aucs.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&aucs);
                (Some(m), Some(s))
            };
            CellSummary {
                method,
                noise_rate: f64::from_bits(bits),
                runs: runs.len(),
                mean_accuracy,
                std_accuracy,
                single_run: runs.len() == 1,
                mean_auc,
                std_auc,
                mean_wall_clock_s: runs.iter().map(|r| r.wall_clock_s).sum::<f64>() / runs.len() as f64,
            }
        })
        .collect()
}

pub fn write_summary_csv(cells: &[CellSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "noise_rate",
        "runs",
        "mean_accuracy",
        "std_accuracy",
        "single_run",
        "mean_auc",
        "std_auc",
        "mean_wall_clock_s",
    ])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for c in cells {
        w.write_record([
            c.method.clone(),
            c.noise_rate.to_string(),
            c.runs.to_string(),
            format!("{:.6}", c.mean_accuracy),
            format!("{:.6}", c.std_accuracy),
            c.single_run.to_string(),
            opt(c.mean_auc),
            opt(c.std_auc),
            format!("{:.3}", c.mean_wall_clock_s),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_json(cells: &[CellSummary], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cells)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary_json(path: &Path) -> Result<Vec<CellSummary>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
