use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::Result;
use crate::matrix::Matrix;

/// Two isotropic unit-variance Gaussians with means at `±separation / 2`
/// along the all-ones direction, so the means lie `separation` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoGaussians {
    pub dim: usize,
    pub separation: f64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for TwoGaussians {
    fn default() -> Self {
        TwoGaussians {
            dim: 20,
            separation: 3.0,
            train: 1000,
            validation: 300,
            test: 2000,
            seed: 0,
        }
    }
}

/// Balanced-in-expectation binary task, split in train/validation/test order
/// and standardised with train statistics.
pub fn two_gaussians(cfg: &TwoGaussians) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.train + cfg.validation + cfg.test;
    let shift = cfg.separation / (2.0 * (cfg.dim as f64).sqrt());
    let mut data = Vec::with_capacity(m * cfg.dim);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let y = rng.random_range(0..2usize);
        let sign = if y == 1 { 1.0 } else { -1.0 };
        for _ in 0..cfg.dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push(z + sign * shift);
        }
        labels.push(y);
    }
    let mut ds = Dataset::new(Matrix::new(m, cfg.dim, data)?, labels, Some(2))?.with_source(format!(
        "two_gaussians dim={} separation={} seed={}",
        cfg.dim, cfg.separation, cfg.seed
    ));
    let tags = (0..m)
        .map(|i| {
            if i < cfg.train {
                super::Split::Train
            } else if i < cfg.train + cfg.validation {
                super::Split::Validation
            } else {
                super::Split::Test
            }
        })
        .collect();
    ds.set_parts(tags, None);
    ds.standardize()
}
