use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const EMBEDDING_MAGIC: &str = "DVFORGE-EMB-1";

/// Layout: magic, u32 M, u32 d, M*d little-endian f32 features, M u16 labels.
pub fn read_embeddings<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut buf = Vec::new();
    reader
        .read_to_end(&mut buf)
        .map_err(|e| Error::io("<embedding input>", e))?;
    let magic = EMBEDDING_MAGIC.as_bytes();
    let header = magic.len() + 8;
    if buf.len() < magic.len() {
        if magic.starts_with(&buf) {
            return Err(Error::Truncated {
                expected: header,
                found: buf.len(),
            });
        }
        return Err(Error::BadMagic {
            expected: EMBEDDING_MAGIC,
        });
    }
    if &buf[..magic.len()] != magic {
        return Err(Error::BadMagic {
            expected: EMBEDDING_MAGIC,
        });
    }
    if buf.len() < header {
        return Err(Error::Truncated {
            expected: header,
            found: buf.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
    let m = u32_at(magic.len());
    let d = u32_at(magic.len() + 4);
    if m == 0 {
        return Err(Error::Empty("embedding file holds no records".into()));
    }
    let expected = header + m * d * 4 + m * 2;
    if buf.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: buf.len(),
        });
    }
    let feats = &buf[header..header + m * d * 4];
    let data: Vec<f64> = feats
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let labels: Vec<usize> = buf[header + m * d * 4..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    Dataset::new(Matrix::new(m, d, data)?, labels, None)
}

pub fn load_embeddings(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_embeddings(std::io::BufReader::new(file))?.with_source(path.display().to_string()))
}

/// Features are narrowed to f32, so only f32-representable values round-trip.
pub fn write_embeddings<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let io = |e| Error::io("<embedding output>", e);
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))
    };
    out.write_all(EMBEDDING_MAGIC.as_bytes()).map_err(io)?;
    out.write_all(&to_u32(ds.len())?.to_le_bytes()).map_err(io)?;
    out.write_all(&to_u32(ds.dim())?.to_le_bytes()).map_err(io)?;
    for v in ds.features().as_slice() {
        out.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
    }
    for &l in ds.labels() {
        let l = u16::try_from(l).map_err(|_| Error::InvalidArgument(format!("label {l} exceeds u16")))?;
        out.write_all(&l.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}
