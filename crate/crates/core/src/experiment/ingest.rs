use std::path::{Path, PathBuf};

use super::config::{DataFormat, DatasetSpec};
use crate::data::{
    load_embeddings, read_csv, read_libsvm, sha256_file, two_gaussians, write_canonical, Dataset, Manifest,
    NoiseSpec, SplitCounts,
};
use crate::error::{Error, Result};

/// File name of the canonical dataset written next to a manifest.
pub const CANONICAL_FILE: &str = "dataset.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Parse a raw source file without any transforms.
pub fn load_source(path: &Path, format: DataFormat, dim: Option<usize>) -> Result<Dataset> {
    let ds = match format {
        DataFormat::Libsvm => read_libsvm(path, dim)?,
        DataFormat::Csv => read_csv(path)?,
        DataFormat::Embedding => load_embeddings(path)?,
        DataFormat::Manifest => return Manifest::load(path)?.open_dataset(path),
        DataFormat::Synthetic => {
            return Err(Error::InvalidArgument("synthetic data has no source file".into()));
        }
    };
    Ok(ds.with_source(path.display().to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub format: DataFormat,
    pub dim: Option<usize>,
    pub splits: SplitCounts,
    pub seed: u64,
    pub binarize: Option<usize>,
    pub standardize: bool,
}

/// Binarize, split and standardize a parsed dataset, in that order.
pub fn prepare(ds: Dataset, splits: SplitCounts, seed: u64, binarize: Option<usize>, standardize: bool) -> Result<Dataset> {
    let ds = match binarize {
        Some(pos) => ds.binarize(pos)?,
        None => ds,
    };
    let ds = ds.split(splits.train, splits.validation, splits.test, seed)?;
    if standardize {
        ds.standardize()
    } else {
        Ok(ds)
    }
}

/// Parse `source`, prepare it and write `dataset.csv` plus `manifest.json`
/// into `out_dir`. Returns the manifest and its path.
pub fn ingest(source: &Path, opts: &IngestOptions, out_dir: &Path) -> Result<(Manifest, PathBuf)> {
    if !source.exists() {
        return Err(Error::io(
            source,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let raw = load_source(source, opts.format, opts.dim)?;
    let ds = prepare(raw, opts.splits, opts.seed, opts.binarize, opts.standardize)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data_path = out_dir.join(CANONICAL_FILE);
    write_canonical(&ds, &data_path)?;
    let manifest = Manifest {
        source: source.display().to_string(),
        format: opts.format.as_str().to_string(),
        seed: opts.seed,
        splits: SplitCounts::of(&ds),
        binarize: opts.binarize,
        standardize: opts.standardize,
        num_classes: ds.num_classes(),
        dim: ds.dim(),
        records: ds.len(),
        dataset_file: CANONICAL_FILE.to_string(),
        sha256: sha256_file(&data_path)?,
        transforms: ds.provenance.transforms.clone(),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok((manifest, manifest_path))
}

/// Materialise the dataset a config describes, split and ready for noise.
pub fn load_dataset(spec: &DatasetSpec, split_seed: u64) -> Result<Dataset> {
    match spec.format {
        DataFormat::Synthetic => two_gaussians(&spec.synthetic),
        DataFormat::Manifest => {
            let path = spec.path.as_deref().ok_or_else(|| Error::Config("manifest path missing".into()))?;
            Manifest::load(path)?.open_dataset(path)
        }
        format => {
            let path = spec.path.as_deref().ok_or_else(|| Error::Config("dataset path missing".into()))?;
            let splits = spec
                .splits
                .ok_or_else(|| Error::Config("raw datasets need splits".into()))?;
            prepare(load_source(path, format, spec.dim)?, splits, split_seed, spec.binarize, spec.standardize)
        }
    }
}

/// Corrupt the train labels of an ingested dataset and write the result, with
/// its noise column and an updated manifest, into `out_dir`.
pub fn inject_noise_file(manifest_path: &Path, spec: &NoiseSpec, out_dir: &Path) -> Result<(Manifest, PathBuf)> {
    let manifest = Manifest::load(manifest_path)?;
    let ds = manifest.open_dataset(manifest_path)?.inject_noise(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data_path = out_dir.join(CANONICAL_FILE);
    write_canonical(&ds, &data_path)?;
    let noisy = Manifest {
        sha256: sha256_file(&data_path)?,
        dataset_file: CANONICAL_FILE.to_string(),
        transforms: ds.provenance.transforms.clone(),
        ..manifest
    };
    let path = out_dir.join(MANIFEST_FILE);
    noisy.save(&path)?;
    Ok((noisy, path))
}
