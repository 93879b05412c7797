//! Parameter checkpoints.
//!
//! Layout: the ASCII line `DVFORGE-CKPT-1\n`, a little-endian `u64` giving the
//! byte length of a JSON manifest, the manifest (`[{name, shape, offset}]`,
//! offsets counted in floats), then every tensor as little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "DVFORGE-CKPT-1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamStore) -> Result<()> {
    let mut manifest = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (_, name, t) in params.iter() {
        manifest.push(ManifestEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
    }
    let json = serde_json::to_vec(&manifest)?;
    let mut buf = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 8 + json.len() + offset * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, _, t) in params.iter() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    let magic = CHECKPOINT_MAGIC.as_bytes();
    if bytes.len() < magic.len() || &bytes[..magic.len()] != magic {
        return Err(Error::BadMagic {
            expected: "DVFORGE-CKPT-1",
        });
    }
    let mut pos = magic.len();
    let need = |pos: usize, n: usize, have: usize| {
        if pos + n > have {
            Err(Error::Truncated {
                expected: pos + n,
                found: have,
            })
        } else {
            Ok(())
        }
    };
    need(pos, 8, bytes.len())?;
    let json_len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    need(pos, json_len, bytes.len())?;
    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&bytes[pos..pos + json_len])?;
    pos += json_len;
    let floats = (bytes.len() - pos) / 8;
    let mut out = Vec::with_capacity(manifest.len());
    for e in manifest {
        let n: usize = e.shape.iter().product();
        if e.offset + n > floats {
            return Err(Error::Truncated {
                expected: pos + (e.offset + n) * 8,
                found: bytes.len(),
            });
        }
        let data = bytes[pos + e.offset * 8..pos + (e.offset + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((e.name, Tensor::new(e.shape, data)?));
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, params: &ParamStore) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, params: &mut ParamStore) -> Result<()> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    params.load(read_checkpoint(f)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a", Tensor::matrix(2, 2, vec![1.0, -2.5, 3.25, 1e-300]).unwrap());
        s.add("b", Tensor::vector(vec![f64::MAX, 0.1]));
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = store();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &s).unwrap();
        let mut other = store();
        other.get_mut(crate::autodiff::ParamId(0)).data_mut()[0] = 99.0;
        other.load(read_checkpoint(&buf[..]).unwrap()).unwrap();
        for ((_, _, x), (_, _, y)) in s.iter().zip(other.iter()) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(
            read_checkpoint(&b"NOPE"[..]),
            Err(Error::BadMagic { .. })
        ));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_checkpoint(&buf[..]),
            Err(Error::Truncated { .. })
        ));
    }
}
