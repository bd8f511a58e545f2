//! Binary array container used for checkpoints.
//!
//! A file is a plain sequence of little-endian records, no header:
//!
//! ```text
//! [name_len: u32][name: utf8][dtype: u8][ndim: u8][dims: u32 × ndim][payload]
//! ```
//!
//! dtype 0 is `f32`, 1 is `f64`, 2 is `u64`.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
}

impl Payload {
    fn dtype(&self) -> u8 {
        match self {
            Payload::F32(_) => 0,
            Payload::F64(_) => 1,
            Payload::U64(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Floating payload widened to `f64`.
    pub fn to_f64(&self) -> Option<Vec<f64>> {
        match self {
            Payload::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            Payload::F64(v) => Some(v.clone()),
            Payload::U64(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u32>,
    pub payload: Payload,
}

impl Record {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, payload: Payload) -> Self {
        Self { name: name.into(), dims, payload }
    }

    pub fn scalar_u64(name: impl Into<String>, value: u64) -> Self {
        Self::new(name, vec![1], Payload::U64(vec![value]))
    }
}

pub fn encode(records: &[Record]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        let count: u64 = r.dims.iter().map(|&d| d as u64).product();
        if count != r.payload.len() as u64 {
            return Err(Error::Checkpoint(format!(
                "array {}: dims {:?} hold {count} values but payload has {}",
                r.name,
                r.dims,
                r.payload.len()
            )));
        }
        let ndim = u8::try_from(r.dims.len())
            .map_err(|_| Error::Checkpoint(format!("array {}: too many dimensions", r.name)))?;
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.push(r.payload.dtype());
        out.push(ndim);
        for d in &r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &r.payload {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut c = Cursor { bytes, pos: 0 };
    let mut out = Vec::new();
    while c.pos < bytes.len() {
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::Checkpoint(format!("array name at byte {} is not utf-8", c.pos)))?
            .to_string();
        let dtype = c.u8("dtype")?;
        let ndim = c.u8("ndim")? as usize;
        let dims = (0..ndim).map(|_| c.u32("dims")).collect::<Result<Vec<_>>>()?;
        let count = dims.iter().map(|&d| d as usize).product::<usize>();
        let what = format!("payload of {name}");
        let payload = match dtype {
            0 => Payload::F32(
                c.take(4 * count, &what)?
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            1 => Payload::F64(
                c.take(8 * count, &what)?
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            2 => Payload::U64(
                c.take(8 * count, &what)?
                    .chunks_exact(8)
                    .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            other => return Err(Error::Checkpoint(format!("array {name}: unknown dtype {other}"))),
        };
        out.push(Record { name, dims, payload });
    }
    Ok(out)
}

pub fn write(path: &Path, records: &[Record]) -> Result<()> {
    let bytes = encode(records)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<Record>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::format(path, e.to_string()))
}
