use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn of(ds: &Dataset) -> Self {
        SplitCounts {
            train: ds.count(Split::Train),
            validation: ds.count(Split::Validation),
            test: ds.count(Split::Test),
        }
    }
}

/// Sidecar describing an ingested dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub format: String,
    pub seed: u64,
    pub splits: SplitCounts,
    pub binarize: Option<usize>,
    pub standardize: bool,
    pub num_classes: usize,
    pub dim: usize,
    pub records: usize,
    /// Canonical dataset file, relative to the manifest.
    pub dataset_file: String,
    pub sha256: String,
    pub transforms: Vec<String>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Read the canonical dataset next to the manifest, verifying its hash.
    pub fn open_dataset(&self, manifest_path: &Path) -> Result<Dataset> {
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let data_path = dir.join(&self.dataset_file);
        let digest = sha256_file(&data_path)?;
        if digest != self.sha256 {
            return Err(Error::Config(format!(
                "{}: checksum {digest} does not match manifest {}",
                data_path.display(),
                self.sha256
            )));
        }
        let mut ds = read_canonical(&data_path, self.num_classes)?;
        ds.provenance.source = self.source.clone();
        ds.provenance.transforms = self.transforms.clone();
        Ok(ds)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// CSV with columns `split,label,noisy,x1..xd`.
pub fn write_canonical(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = vec!["split".into(), "label".into(), "noisy".into()];
    header.extend((1..=ds.dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut row = vec![
            ds.splits()[r].to_string(),
            ds.labels()[r].to_string(),
            u8::from(ds.is_noisy(r)).to_string(),
        ];
        row.extend(ds.features().row(r).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn read_canonical(path: &Path, num_classes: usize) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let width = rdr.headers()?.len();
    if width < 3 {
        return Err(Error::parse(1, "canonical header needs split,label,noisy"));
    }
    let mut split = Vec::new();
    let mut labels = Vec::new();
    let mut noisy = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        split.push(rec[0].parse::<Split>().map_err(|e| Error::parse(line, e.to_string()))?);
        labels.push(
            rec[1]
                .parse::<usize>()
                .map_err(|_| Error::parse(line, "bad label"))?,
        );
        noisy.push(&rec[2] == "1");
        for f in rec.iter().skip(3) {
            data.push(f.parse::<f64>().map_err(|_| Error::parse(line, format!("bad value {f:?}")))?);
        }
    }
    let m = labels.len();
    let mut ds = Dataset::new(Matrix::new(m, width - 3, data)?, labels, Some(num_classes))?;
    let mask = noisy.iter().any(|&b| b).then_some(noisy);
    ds.set_parts(split, mask);
    Ok(ds)
}
