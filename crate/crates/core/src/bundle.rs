//! Checkpoint container: a JSON header followed by little-endian `f64` tensors.
//!
//! ```text
//! b"PPTB" | u32 version=1 | u32 kind_len | kind | u32 header_len | header JSON
//!        | u32 tensor_count | per tensor: u32 name_len | name | u32 ndim | u64 dims.. | f64 payload
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const BUNDLE_MAGIC: [u8; 4] = *b"PPTB";
const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub kind: String,
    pub header: String,
    pub tensors: Vec<Tensor>,
}

impl Bundle {
    pub fn new<H: Serialize>(kind: &str, header: &H) -> Self {
        Bundle {
            kind: kind.to_string(),
            header: serde_json::to_string(header).expect("checkpoint headers always serialise"),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: data.to_vec(),
        });
    }

    pub fn header<H: DeserializeOwned>(&self) -> Result<H> {
        serde_json::from_str(&self.header)
            .map_err(|e| Error::Format(format!("bad {} checkpoint header: {e}", self.kind)))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "expected a `{kind}` checkpoint, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    /// Removes and returns the tensor `name`, checking its shape.
    pub fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let pos = self
            .tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor `{name}`")))?;
        let t = self.tensors.remove(pos);
        if t.shape != shape {
            return Err(Error::Shape(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t.data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&BUNDLE_MAGIC);
        put_u32(&mut out, BUNDLE_VERSION);
        put_str(&mut out, &self.kind);
        put_str(&mut out, &self.header);
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            put_u32(&mut out, t.shape.len() as u32);
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != BUNDLE_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let kind = r.string()?;
        let header = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize);
            }
            let len: usize = shape.iter().product();
            let data: Vec<f64> = r
                .take(len * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "tensor `{name}` holds a non-finite value at offset {pos}"
                )));
            }
            tensors.push(Tensor { name, shape, data });
        }
        if r.at != bytes.len() {
            return Err(Error::Length {
                expected: r.at,
                found: bytes.len(),
            });
        }
        Ok(Bundle {
            kind,
            header,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Bundle::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(Error::Length {
                expected: self.at + n,
                found: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}
