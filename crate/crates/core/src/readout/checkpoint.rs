//! `BPU1` checkpoint container.
//!
//! ```text
//! "BPU1"                      magic
//! u32                         tensor count
//! per tensor:  u32 name_len, name (utf-8), u32 ndim, u64 dims[ndim]
//! per tensor:  f64 values, row-major
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::projection::LinearProjection;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BPU1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn matrix(name: &str, m: &Array2<f64>) -> Self {
        Tensor {
            name: name.to_string(),
            shape: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }

    pub fn vector(name: &str, v: &Array1<f64>) -> Self {
        Tensor {
            name: name.to_string(),
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }
}

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Length {
                what: what.to_string(),
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "checkpoint magic")? != MAGIC {
        return Err(Error::Format("not a BPU1 checkpoint".into()));
    }
    let count = r.u32("tensor count")? as usize;
    let mut heads = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(len, "tensor name")?.to_vec())
            .map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
        let ndim = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64("tensor dimension")? as usize);
        }
        heads.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in heads {
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8, &format!("tensor `{name}`"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    Ok(tensors)
}

/// Writes through a temporary file so a failed run never leaves a truncated checkpoint.
pub fn write(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(tensors)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn projection_tensors(prefix: &str, p: &LinearProjection) -> Vec<Tensor> {
    let mut out = vec![Tensor::matrix(&format!("{prefix}.weight"), &p.weights)];
    if let Some(b) = &p.bias {
        out.push(Tensor::vector(&format!("{prefix}.bias"), b));
    }
    out
}

/// Restores a projection of known shape from named tensors.
pub fn load_projection(prefix: &str, tensors: &[Tensor], into: &mut LinearProjection) -> Result<()> {
    let find = |name: String| {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks `{name}`")))
    };
    let w = find(format!("{prefix}.weight"))?;
    if w.shape != [into.out_dim(), into.in_dim()] {
        return Err(Error::Format(format!(
            "`{prefix}.weight` has shape {:?}, model expects [{}, {}]",
            w.shape,
            into.out_dim(),
            into.in_dim()
        )));
    }
    into.weights = Array2::from_shape_vec((into.out_dim(), into.in_dim()), w.data.clone()).expect("checked shape");
    if let Some(b) = &mut into.bias {
        let t = find(format!("{prefix}.bias"))?;
        if t.shape != [b.len()] {
            return Err(Error::Format(format!("`{prefix}.bias` has shape {:?}", t.shape)));
        }
        *b = Array1::from(t.data.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let t = vec![
            Tensor { name: "a".into(), shape: vec![2, 1], data: vec![1.5, -2.0] },
            Tensor { name: "b".into(), shape: vec![1], data: vec![0.25] },
        ];
        let bytes = encode(&t);
        assert_eq!(&bytes[..4], b"BPU1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(decode(&bytes).unwrap(), t);
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Length { .. })));
        assert!(matches!(decode(b"XXXX"), Err(Error::Format(_))));
    }
}
