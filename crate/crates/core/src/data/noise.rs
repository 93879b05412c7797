use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `y -> 1 - y`; binary tasks only.
    #[default]
    BinaryFlip,
    /// `y -> (y + 1) mod K`, so the last class wraps to 0.
    CircularShift,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::BinaryFlip => "binary_flip",
            NoiseKind::CircularShift => "circular_shift",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary_flip" | "flip" => Ok(NoiseKind::BinaryFlip),
            "circular_shift" | "shift" => Ok(NoiseKind::CircularShift),
            other => Err(Error::InvalidArgument(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rate: f64,
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(rate: f64, kind: NoiseKind, seed: u64) -> Self {
        NoiseSpec { rate, kind, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::InvalidArgument(format!(
                "noise rate {} outside [0, 1)",
                self.rate
            )));
        }
        Ok(())
    }

    /// Number of corrupted records among `n` train records.
    pub fn count(&self, n: usize) -> usize {
        // the epsilon keeps e.g. 0.3 * 1000 from landing just under 300
        ((self.rate * n as f64) + 1e-9).floor() as usize
    }
}

/// Corrupt labels of a uniform sample of `candidates`; returns a mask over
/// all labels.
pub(crate) fn corrupt(
    labels: &mut [usize],
    num_classes: usize,
    candidates: &[usize],
    spec: &NoiseSpec,
) -> Result<Vec<bool>> {
    spec.validate()?;
    if spec.kind == NoiseKind::BinaryFlip && num_classes != 2 {
        return Err(Error::InvalidArgument(format!(
            "binary_flip needs 2 classes, dataset has {num_classes}"
        )));
    }
    let mut mask = vec![false; labels.len()];
    let k = spec.count(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    chosen.sort_unstable();
    for row in chosen {
        labels[row] = match spec.kind {
            NoiseKind::BinaryFlip => 1 - labels[row],
            NoiseKind::CircularShift => (labels[row] + 1) % num_classes,
        };
        mask[row] = true;
    }
    Ok(mask)
}
