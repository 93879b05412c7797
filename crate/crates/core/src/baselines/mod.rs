//! Comparison valuators: Leave-One-Out, exact and truncated Monte-Carlo
//! Shapley values, a reduced REINFORCE valuator, and the threshold sweep used
//! to turn any value vector into a filtered training set.

mod dvrl;
mod loo;
mod shapley;
mod sweep;

pub use dvrl::{dvrl_lite, moving_average, DvrlConfig};
pub use loo::loo_values;
pub use shapley::{exact_shapley, shapley_from_game, tmc_shapley, ShapleyConfig, TmcReport, MAX_EXACT_RECORDS};
pub use sweep::{quantile_thresholds, threshold_sweep, SweepResult, SWEEP_QUANTILES};

use crate::data::Samples;
use crate::error::Result;
use crate::estimator::InnerEstimator;

/// Validation accuracy of the inner estimator as a coalition game over
/// training rows; degenerate coalitions are worth 0.
#[derive(Debug, Clone, Copy)]
pub struct Game<'a> {
    pub train: &'a Samples,
    pub validation: &'a Samples,
    pub estimator: &'a InnerEstimator,
}

impl<'a> Game<'a> {
    pub fn new(train: &'a Samples, validation: &'a Samples, estimator: &'a InnerEstimator) -> Self {
        Game {
            train,
            validation,
            estimator,
        }
    }

    pub fn value(&self, rows: &[usize]) -> Result<f64> {
        Ok(self
            .estimator
            .score_rows(
                &self.train.features,
                &self.train.labels,
                rows,
                self.train.num_classes,
                &self.validation.features,
                &self.validation.labels,
            )?
            .unwrap_or(0.0))
    }
}
