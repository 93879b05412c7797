//! One-step valuation environment: a state is a random batch of training
//! records, the action a selection mask over it, and the reward the change in
//! validation accuracy relative to fitting on the whole batch.

use rand::Rng;

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::estimator::InnerEstimator;
use crate::matrix::Matrix;

/// Per-record binary actions plus the log-probability of each decision under
/// the policy that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    pub selected: Vec<bool>,
    pub log_probs: Vec<f64>,
}

impl SelectionMask {
    /// Mask with no associated policy (log-probabilities zero).
    pub fn fixed(selected: Vec<bool>) -> Self {
        let log_probs = vec![0.0; selected.len()];
        SelectionMask { selected, log_probs }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn joint_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateBatch {
    /// Row ids into the training samples.
    pub indices: Vec<usize>,
    /// One row per record: features followed by the one-hot label.
    pub vectors: Matrix,
    pub baseline_score: f64,
}

impl StateBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// `selected_score - baseline_score`, before any reward scaling.
    pub reward: f64,
    pub selected_count: usize,
    pub selected_score: f64,
    /// Empty, single-row or single-class selection; scored as 0.
    pub degenerate: bool,
}

/// Features of `rows` concatenated with their one-hot labels.
pub fn record_vectors(samples: &Samples, rows: &[usize]) -> Matrix {
    let d = samples.dim();
    let k = samples.num_classes;
    let mut out = Matrix::zeros(rows.len(), d + k);
    for (i, &r) in rows.iter().enumerate() {
        let dst = out.row_mut(i);
        dst[..d].copy_from_slice(samples.features.row(r));
        dst[d + samples.labels[r]] = 1.0;
    }
    out
}

#[derive(Debug, Clone)]
pub struct ValuationEnv<'a> {
    train: &'a Samples,
    validation: &'a Samples,
    estimator: InnerEstimator,
    state_size: usize,
    /// Multiplier applied to rewards before they reach the learner.
    pub reward_scale: f64,
}

impl<'a> ValuationEnv<'a> {
    pub fn new(
        train: &'a Samples,
        validation: &'a Samples,
        estimator: InnerEstimator,
        state_size: usize,
    ) -> Result<Self> {
        if state_size == 0 {
            return Err(Error::InvalidArgument("state size must be positive".into()));
        }
        if train.len() < state_size {
            return Err(Error::InsufficientData {
                needed: state_size,
                available: train.len(),
            });
        }
        if validation.is_empty() {
            return Err(Error::Empty("validation set".into()));
        }
        if train.dim() != validation.dim() || train.num_classes != validation.num_classes {
            return Err(Error::ShapeMismatch {
                op: "env",
                lhs: vec![train.dim(), train.num_classes],
                rhs: vec![validation.dim(), validation.num_classes],
            });
        }
        Ok(ValuationEnv {
            train,
            validation,
            estimator,
            state_size,
            reward_scale: 1.0,
        })
    }

    pub fn with_reward_scale(mut self, scale: f64) -> Self {
        self.reward_scale = scale;
        self
    }

    pub fn state_size(&self) -> usize {
        self.state_size
    }

    /// Width of a record vector.
    pub fn record_dim(&self) -> usize {
        self.train.dim() + self.train.num_classes
    }

    pub fn train(&self) -> &Samples {
        self.train
    }

    pub fn estimator(&self) -> &InnerEstimator {
        &self.estimator
    }

    fn score(&self, rows: &[usize]) -> Result<Option<f64>> {
        self.estimator.score_rows(
            &self.train.features,
            &self.train.labels,
            rows,
            self.train.num_classes,
            &self.validation.features,
            &self.validation.labels,
        )
    }

    /// Uniform sample of `state_size` distinct records.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StateBatch> {
        let indices = rand::seq::index::sample(rng, self.train.len(), self.state_size).into_vec();
        self.state_from_indices(indices)
    }

    /// State over explicit record ids (any count of at least one).
    pub fn state_from_indices(&self, indices: Vec<usize>) -> Result<StateBatch> {
        if indices.is_empty() {
            return Err(Error::Empty("state batch".into()));
        }
        let baseline_score = self.score(&indices)?.unwrap_or(0.0);
        Ok(StateBatch {
            vectors: record_vectors(self.train, &indices),
            indices,
            baseline_score,
        })
    }

    pub fn step(&self, state: &StateBatch, mask: &[bool]) -> Result<StepOutcome> {
        if mask.len() != state.len() {
            return Err(Error::MaskLength {
                expected: state.len(),
                got: mask.len(),
            });
        }
        let rows: Vec<usize> = state
            .indices
            .iter()
            .zip(mask)
            .filter_map(|(&i, &m)| m.then_some(i))
            .collect();
        let scored = self.score(&rows)?;
        let selected_score = scored.unwrap_or(0.0);
        Ok(StepOutcome {
            reward: selected_score - state.baseline_score,
            selected_count: rows.len(),
            selected_score,
            degenerate: scored.is_none(),
        })
    }
}
