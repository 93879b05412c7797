use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Dense CSV with a header row; the column named `label` holds non-negative
/// integer classes and every other column is a numeric feature.
pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::parse(1, "header has no `label` column"))?;
    let width = headers.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::parse(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for (c, field) in rec.iter().enumerate() {
            let field = field.trim();
            if c == label_col {
                let l: usize = field
                    .parse()
                    .map_err(|_| Error::parse(line, format!("label {field:?} is not a class index")))?;
                labels.push(l);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(line, format!("value {field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::parse(line, format!("value {field:?} is not finite")));
                }
                data.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Empty("csv input has no records".into()));
    }
    let m = labels.len();
    Dataset::new(Matrix::new(m, width - 1, data)?, labels, None)
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_csv(file)?.with_source(path.display().to_string()))
}

/// Header `label,x1,...,xd`; values use the shortest exact representation.
pub fn emit_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((1..=ds.dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut row = vec![ds.labels()[r].to_string()];
        row.extend(ds.features().row(r).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
