//! Datasets, file formats, label noise and splitting.

mod embedding;
mod libsvm;
mod manifest;
mod noise;
mod synthetic;
mod tabular;

pub use embedding::{load_embeddings, read_embeddings, write_embeddings, EMBEDDING_MAGIC};
pub use libsvm::{emit_libsvm, parse_libsvm, read_libsvm};
pub use manifest::{read_canonical, sha256_file, write_canonical, Manifest, SplitCounts};
pub use noise::{NoiseKind, NoiseSpec};
pub use synthetic::{two_gaussians, TwoGaussians};
pub use tabular::{emit_csv, parse_csv, read_csv};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    /// Left over when the requested split sizes do not cover every record.
    Unused,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unused => "unused",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "unused" => Ok(Split::Unused),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub transforms: Vec<String>,
}

/// A labelled table with per-record split tags and an optional noise mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    split: Vec<Split>,
    noise_mask: Option<Vec<bool>>,
    pub provenance: Provenance,
}

/// Rows of one split, copied out for fast access.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Row index of each sample in the parent dataset.
    pub ids: Vec<usize>,
    pub noisy: Vec<bool>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

impl Dataset {
    /// Every record starts in the train split. `num_classes` is inferred as
    /// `max(label) + 1` (at least 2) when `None`.
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: Option<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset has no records".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                lhs: vec![features.rows(), features.cols()],
                rhs: vec![labels.len()],
            });
        }
        let max = labels.iter().copied().max().unwrap_or(0);
        let num_classes = num_classes.unwrap_or((max + 1).max(2));
        if max >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {max} out of range for {num_classes} classes"
            )));
        }
        let m = labels.len();
        Ok(Dataset {
            features,
            labels,
            num_classes,
            split: vec![Split::Train; m],
            noise_mask: None,
            provenance: Provenance::default(),
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.provenance.source = source.into();
        self
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    pub fn noise_mask(&self) -> Option<&[bool]> {
        self.noise_mask.as_deref()
    }

    pub fn is_noisy(&self, row: usize) -> bool {
        self.noise_mask.as_ref().is_some_and(|m| m[row])
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|&&s| s == which).count()
    }

    pub fn part(&self, which: Split) -> Samples {
        let ids = self.indices(which);
        Samples {
            features: self.features.select_rows(&ids),
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            noisy: ids.iter().map(|&i| self.is_noisy(i)).collect(),
            ids,
        }
    }

    /// Replace tags wholesale (used when reading canonical files).
    pub(crate) fn set_parts(&mut self, split: Vec<Split>, noise_mask: Option<Vec<bool>>) {
        debug_assert_eq!(split.len(), self.len());
        self.split = split;
        self.noise_mask = noise_mask;
    }

    /// Seeded shuffle, then the first `train` shuffled rows become train,
    /// the next `validation` validation and the next `test` test.
    pub fn split(mut self, train: usize, validation: usize, test: usize, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let total = train + validation + test;
        if total > self.len() {
            return Err(Error::InsufficientData {
                needed: total,
                available: self.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut tags = vec![Split::Unused; self.len()];
        for (k, &row) in order.iter().enumerate() {
            tags[row] = if k < train {
                Split::Train
            } else if k < train + validation {
                Split::Validation
            } else if k < total {
                Split::Test
            } else {
                Split::Unused
            };
        }
        self.split = tags;
        self.provenance
            .transforms
            .push(format!("split train={train} validation={validation} test={test} seed={seed}"));
        Ok(self)
    }

    /// Label 1 for `positive_class`, 0 for everything else.
    pub fn binarize(mut self, positive_class: usize) -> Result<Self> {
        if positive_class >= self.num_classes {
            return Err(Error::InvalidArgument(format!(
                "positive class {positive_class} out of range for {} classes",
                self.num_classes
            )));
        }
        for l in &mut self.labels {
            *l = usize::from(*l == positive_class);
        }
        self.num_classes = 2;
        self.provenance
            .transforms
            .push(format!("binarize positive_class={positive_class}"));
        Ok(self)
    }

    /// Scale every feature to zero mean and unit variance using train-split
    /// statistics. Constant features are only centred.
    pub fn standardize(mut self) -> Result<Self> {
        let train = self.indices(Split::Train);
        if train.is_empty() {
            return Err(Error::Empty("no train rows to standardise with".into()));
        }
        let d = self.dim();
        let n = train.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in &train {
            for (m, v) in mean.iter_mut().zip(self.features.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in &train {
            for ((s, v), m) in var.iter_mut().zip(self.features.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        for r in 0..self.len() {
            for ((v, m), s) in self.features.row_mut(r).iter_mut().zip(&mean).zip(&std) {
                *v = (*v - m) / s;
            }
        }
        self.provenance.transforms.push("standardize train-statistics".into());
        Ok(self)
    }

    /// Corrupt a uniform sample of train labels; see [`NoiseSpec`].
    pub fn inject_noise(mut self, spec: &NoiseSpec) -> Result<Self> {
        let train = self.indices(Split::Train);
        let mask = noise::corrupt(&mut self.labels, self.num_classes, &train, spec)?;
        self.noise_mask = Some(mask);
        self.provenance.transforms.push(format!(
            "noise rate={} kind={} seed={}",
            spec.rate, spec.kind, spec.seed
        ));
        Ok(self)
    }
}
