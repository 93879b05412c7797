use serde::{Deserialize, Serialize};

use super::Game;
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Number of evenly spaced quantiles (0%, 5%, ..., 100%) tried as cut-offs.
pub const SWEEP_QUANTILES: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ascending, deduplicated. The first keeps every record.
    pub thresholds_tried: Vec<f64>,
    pub val_scores: Vec<f64>,
    pub best_threshold: f64,
    pub best_val_score: f64,
    /// Validation score of the unfiltered fit.
    pub baseline_val_score: f64,
    pub final_test_score: f64,
    pub kept: usize,
}

/// The 21 quantile cut-offs of `values`, ascending and deduplicated.
pub fn quantile_thresholds(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("values".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("value of record {i}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = sorted.len() - 1;
    let mut out: Vec<f64> = (0..SWEEP_QUANTILES)
        .map(|k| sorted[k * last / (SWEEP_QUANTILES - 1)])
        .collect();
    out.dedup();
    Ok(out)
}

fn rows_at_or_above(values: &[f64], threshold: f64) -> Vec<usize> {
    (0..values.len()).filter(|&i| values[i] >= threshold).collect()
}

/// Pick the value cut-off that maximises validation accuracy (ties go to the
/// smallest threshold) and report the test accuracy of that fit.
pub fn threshold_sweep(values: &[f64], game: &Game, test: &Samples, exec: Exec) -> Result<SweepResult> {
    if values.len() != game.train.len() {
        return Err(Error::ShapeMismatch {
            op: "threshold_sweep",
            lhs: vec![values.len()],
            rhs: vec![game.train.len()],
        });
    }
    let thresholds = quantile_thresholds(values)?;
    let val_scores = par::try_map_range(exec, thresholds.len(), |k| {
        game.value(&rows_at_or_above(values, thresholds[k]))
    })?;
    let mut best = 0;
    for (k, &s) in val_scores.iter().enumerate() {
        if s > val_scores[best] {
            best = k;
        }
    }
    let rows = rows_at_or_above(values, thresholds[best]);
    let final_test_score = Game::new(game.train, test, game.estimator).value(&rows)?;
    Ok(SweepResult {
        best_threshold: thresholds[best],
        best_val_score: val_scores[best],
        baseline_val_score: val_scores[0],
        thresholds_tried: thresholds,
        val_scores,
        final_test_score,
        kept: rows.len(),
    })
}
