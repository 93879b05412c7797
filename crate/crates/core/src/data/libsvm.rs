use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Parse `<label> <index>:<value> ...` lines (1-based, strictly ascending
/// indices, `#` starts a comment). With `dim`, rows are padded to that width
/// and larger indices are rejected; otherwise the width is the largest index.
///
/// Labels drawn from {-1, +1} map to {0, 1}; other labels must be
/// non-negative integers and are kept as is.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_labels: Vec<(f64, usize)> = Vec::new();
    let mut width = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| Error::parse(lineno, format!("label {label_tok:?} is not a number")))?;
        if !label.is_finite() || label.fract() != 0.0 {
            return Err(Error::parse(lineno, format!("label {label_tok:?} is not an integer")));
        }
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("index {idx:?} is not a positive integer")))?;
            if idx == 0 {
                return Err(Error::parse(lineno, "indices are 1-based; found 0"));
            }
            if idx <= last {
                return Err(Error::parse(
                    lineno,
                    format!("index {idx} does not ascend (previous {last})"),
                ));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(Error::parse(lineno, format!("index {idx} exceeds dimension {d}")));
                }
            }
            let val: f64 = val
                .parse()
                .map_err(|_| Error::parse(lineno, format!("value {val:?} is not a number")))?;
            if !val.is_finite() {
                return Err(Error::parse(lineno, format!("value {val} is not finite")));
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        width = width.max(last);
        rows.push(entries);
        raw_labels.push((label, lineno));
    }
    if rows.is_empty() {
        return Err(Error::Empty("libsvm input has no records".into()));
    }
    let pm_one = raw_labels.iter().all(|&(l, _)| l == 1.0 || l == -1.0)
        && raw_labels.iter().any(|&(l, _)| l == -1.0);
    let mut labels = Vec::with_capacity(rows.len());
    for &(l, lineno) in &raw_labels {
        labels.push(if pm_one {
            usize::from(l > 0.0)
        } else if l < 0.0 {
            return Err(Error::parse(lineno, format!("negative label {l} in a non-binary file")));
        } else {
            l as usize
        });
    }
    let d = dim.unwrap_or(width);
    let mut data = vec![0.0; rows.len() * d];
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            data[r * d + c] = v;
        }
    }
    let num_classes = if pm_one { Some(2) } else { None };
    Dataset::new(Matrix::new(rows.len(), d, data)?, labels, num_classes)
}

pub fn read_libsvm(path: &Path, dim: Option<usize>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_libsvm(BufReader::new(file), dim)?.with_source(path.display().to_string()))
}

/// Write the dataset in LibSVM form. Binary labels are written as -1/+1,
/// values with 17 significant digits so re-parsing is exact. Zero entries are
/// omitted (negative zero is kept).
pub fn emit_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let io = |e| Error::io("<libsvm output>", e);
    for r in 0..ds.len() {
        let label = ds.labels()[r];
        if ds.num_classes() == 2 {
            write!(out, "{}", if label == 1 { "+1" } else { "-1" }).map_err(io)?;
        } else {
            write!(out, "{label}").map_err(io)?;
        }
        for (c, v) in ds.features().row(r).iter().enumerate() {
            if v.to_bits() != 0 {
                write!(out, " {}:{:.16e}", c + 1, v).map_err(io)?;
            }
        }
        writeln!(out).map_err(io)?;
    }
    Ok(())
}
