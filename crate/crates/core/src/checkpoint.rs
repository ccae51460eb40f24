//! Named-tensor checkpoint files.
//!
//! ```text
//! u32 record_count
//! record_count × {
//!     u32 name_len, name_len bytes UTF-8 name,
//!     u32 rank, rank × u32 dims,
//!     prod(dims) × f32 values (row-major)
//! }
//! ```
//! All integers and floats little-endian. Bias vectors are rank 1, everything
//! else rank 2.

use std::path::Path;

use crate::adapter::{AdapterConfig, AdapterParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn is_vector(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|leaf| leaf.starts_with('b'))
}

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend((tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        if is_vector(name) && t.rows() == 1 {
            out.extend(1u32.to_le_bytes());
            out.extend((t.cols() as u32).to_le_bytes());
        } else {
            out.extend(2u32.to_le_bytes());
            out.extend((t.rows() as u32).to_le_bytes());
            out.extend((t.cols() as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend((v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated checkpoint while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader { bytes, pos: 0 };
    let count = r.u32("record count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| Error::Format(format!("tensor name is not UTF-8: {e}")))?
            .to_string();
        let rank = r.u32("rank")?;
        let (rows, cols) = match rank {
            1 => (1, r.u32("dims")? as usize),
            2 => (r.u32("dims")? as usize, r.u32("dims")? as usize),
            other => return Err(Error::Format(format!("tensor {name} has unsupported rank {other}"))),
        };
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format(format!("tensor {name} dims overflow")))?;
        let raw = r.take(n * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        out.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(out)
}

pub fn encode_params(params: &AdapterParams) -> Vec<u8> {
    let named = params.named_tensors();
    encode_tensors(named.iter().map(|(n, t)| (n.as_str(), *t)))
}

pub fn save(path: impl AsRef<Path>, params: &AdapterParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

/// Load and check every tensor's name and shape against `cfg`.
pub fn load(path: impl AsRef<Path>, cfg: &AdapterConfig) -> Result<AdapterParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    AdapterParams::from_named(cfg, decode_tensors(&bytes)?)
}
