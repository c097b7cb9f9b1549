//! Minimal named-tensor container for models, worlds and embeddings.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"EXTF"
//! version u32 = 1
//! count   u32
//! count × { name_len u32, name utf8, rank u32, dims rank×u64, data Π(dims)×f64 }
//! ```
//!
//! Tensors are kept in insertion order; values round-trip bit-exactly.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 4] = b"EXTF";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TensorFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a tensor file (bad magic)")]
    BadMagic,
    #[error("unsupported tensor file version {0}")]
    BadVersion(u32),
    #[error("tensor `{0}` not found")]
    Missing(String),
    #[error("tensor `{name}` has shape {got:?}, expected {expected:?}")]
    Shape { name: String, got: Vec<usize>, expected: Vec<usize> },
    #[error("duplicate tensor name `{0}`")]
    Duplicate(String),
    #[error("malformed tensor file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    entries: Vec<(String, Tensor)>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<(), TensorFileError> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(TensorFileError::Duplicate(name.to_string()));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorFileError::Malformed(format!(
                "tensor `{name}` declares {expected} elements but carries {}",
                data.len()
            )));
        }
        self.entries.push((name.to_string(), Tensor { shape, data }));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, TensorFileError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| TensorFileError::Missing(name.to_string()))
    }

    /// Fetches a tensor and checks its shape.
    pub fn get_shaped(&self, name: &str, expected: &[usize]) -> Result<&[f64], TensorFileError> {
        let t = self.get(name)?;
        if t.shape != expected {
            return Err(TensorFileError::Shape {
                name: name.to_string(),
                got: t.shape.clone(),
                expected: expected.to_vec(),
            });
        }
        Ok(&t.data)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TensorFileError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for d in &t.shape {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TensorFileError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorFileError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(TensorFileError::BadVersion(version));
        }
        let count = read_u32(&mut r)?;
        let mut file = TensorFile::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| TensorFileError::Malformed(e.to_string()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            file.insert(&name, shape, data)?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, TensorFileError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, io::Error> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
