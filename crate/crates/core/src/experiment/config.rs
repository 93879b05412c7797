use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::baselines::{DvrlConfig, ShapleyConfig};
use crate::data::{NoiseKind, SplitCounts, TwoGaussians};
use crate::error::{Error, Result};
use crate::estimator::InnerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// Two-Gaussian task generated in memory.
    #[default]
    Synthetic,
    /// Output of `ingest`: a manifest JSON next to its canonical CSV.
    Manifest,
    Libsvm,
    Csv,
    Embedding,
}

impl DataFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DataFormat::Synthetic => "synthetic",
            DataFormat::Manifest => "manifest",
            DataFormat::Libsvm => "libsvm",
            DataFormat::Csv => "csv",
            DataFormat::Embedding => "embedding",
        }
    }
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(DataFormat::Synthetic),
            "manifest" => Ok(DataFormat::Manifest),
            "libsvm" => Ok(DataFormat::Libsvm),
            "csv" => Ok(DataFormat::Csv),
            "embedding" => Ok(DataFormat::Embedding),
            other => Err(Error::InvalidArgument(format!("unknown data format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub format: DataFormat,
    pub path: Option<PathBuf>,
    /// Feature count for LibSVM input; inferred from the data when absent.
    pub dim: Option<usize>,
    /// Required for raw formats; manifests and synthetic data carry their own.
    pub splits: Option<SplitCounts>,
    pub binarize: Option<usize>,
    pub standardize: bool,
    pub synthetic: TwoGaussians,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseGrid {
    pub rates: Vec<f64>,
    pub kind: NoiseKind,
}

impl Default for NoiseGrid {
    fn default() -> Self {
        NoiseGrid {
            rates: vec![0.0, 0.15, 0.3],
            kind: NoiseKind::BinaryFlip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    /// Fit on the full noisy training set.
    Baseline,
    Rlboost {
        #[serde(default)]
        agent: AgentConfig,
    },
    Loo,
    TmcShap {
        #[serde(default)]
        shapley: ShapleyConfig,
    },
    DvrlLite {
        #[serde(default)]
        dvrl: DvrlConfig,
    },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Baseline => "baseline",
            MethodSpec::Rlboost { .. } => "rlboost",
            MethodSpec::Loo => "loo",
            MethodSpec::TmcShap { .. } => "tmc_shap",
            MethodSpec::DvrlLite { .. } => "dvrl_lite",
        }
    }

    /// Default-configured method by name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "baseline" => MethodSpec::Baseline,
            "rlboost" => MethodSpec::Rlboost {
                agent: AgentConfig::default(),
            },
            "loo" => MethodSpec::Loo,
            "tmc_shap" => MethodSpec::TmcShap {
                shapley: ShapleyConfig::default(),
            },
            "dvrl_lite" => MethodSpec::DvrlLite {
                dvrl: DvrlConfig::default(),
            },
            other => return Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub runs_per_cell: usize,
    pub output_dir: PathBuf,
    /// Extra attempts granted to a failed DVRL-lite cell.
    pub dvrl_retries: usize,
    pub dataset: DatasetSpec,
    pub noise: NoiseGrid,
    pub inner: InnerConfig,
    pub methods: Vec<MethodSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 0,
            runs_per_cell: 5,
            output_dir: PathBuf::from("dvforge-out"),
            dvrl_retries: 3,
            dataset: DatasetSpec::default(),
            noise: NoiseGrid::default(),
            inner: InnerConfig::default(),
            methods: vec![MethodSpec::Baseline],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config file. Relative dataset paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (&cfg.dataset.path, path.parent()) {
            if p.is_relative() {
                cfg.dataset.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs_per_cell == 0 {
            return Err(Error::Config("runs_per_cell must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if self.noise.rates.is_empty() {
            return Err(Error::Config("noise.rates is empty".into()));
        }
        for &rate in &self.noise.rates {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("noise rate {rate} outside [0, 1)")));
            }
        }
        let d = &self.dataset;
        if d.format != DataFormat::Synthetic {
            let path = d
                .path
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} dataset needs a path", d.format.as_str())))?;
            if !path.exists() {
                return Err(Error::Config(format!("dataset path {} does not exist", path.display())));
            }
            if d.format != DataFormat::Manifest && d.splits.is_none() {
                return Err(Error::Config("raw datasets need splits = { train, validation, test }".into()));
            }
        }
        for m in &self.methods {
            match m {
                MethodSpec::Rlboost { agent } => agent.validate()?,
                MethodSpec::TmcShap { shapley } => shapley.validate()?,
                MethodSpec::DvrlLite { dvrl } => dvrl.validate()?,
                MethodSpec::Baseline | MethodSpec::Loo => {}
            }
        }
        Ok(())
    }
}
