//! Binarization at the per-dimension database mean, and the on-disk hash index.
//!
//! Hash index `BHI1`:
//! ```text
//! "BHI1" | u16 version = 1 | u32 n_bits | u32 n_entries
//! per entry: u32 id length | UTF-8 id | ceil(n_bits / 8) hash bytes
//! ```
//! Threshold sidecar `BHT1`:
//! ```text
//! "BHT1" | u16 version = 1 | u32 n_bits | u32 source length | UTF-8 source
//! n_bits f32 thresholds
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader};
use crate::types::{BinaryHash, Descriptor};

pub const BHI1_MAGIC: [u8; 4] = *b"BHI1";
pub const BHT1_MAGIC: [u8; 4] = *b"BHT1";
pub const HASH_FORMAT_VERSION: u16 = 1;

/// Per-dimension binarization thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    values: Vec<f32>,
    source: String,
}

impl ThresholdVector {
    pub fn new(values: Vec<f32>, source: impl Into<String>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values, source: source.into() })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.source.len() + 4 * self.values.len());
        out.extend_from_slice(&BHT1_MAGIC);
        out.extend_from_slice(&HASH_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.source.len() as u32).to_le_bytes());
        out.extend_from_slice(self.source.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        check_header(&mut r, BHT1_MAGIC)?;
        let n_bits = r.u32()? as usize;
        let source_len = r.u32()? as usize;
        let source = utf8(r.take(source_len)?)?;
        let payload = r.take(n_bits.checked_mul(4).ok_or_else(|| Error::Malformed("n_bits overflows".into()))?)?;
        trailing(&r)?;
        let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(values, source)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Mean of every dimension over the database descriptors, summed in `f64`
/// in input order.
pub fn fit_thresholds(database: &[Descriptor], source: impl Into<String>) -> Result<ThresholdVector> {
    let first = database.first().ok_or(Error::EmptyDescriptorSet)?;
    let dims = first.dims();
    let mut sums = vec![0f64; dims];
    for d in database {
        if d.dims() != dims {
            return Err(Error::DimensionMismatch { left: dims, right: d.dims() });
        }
        for (s, &v) in sums.iter_mut().zip(d.values()) {
            *s += v as f64;
        }
    }
    let n = database.len() as f64;
    ThresholdVector::new(sums.into_iter().map(|s| (s / n) as f32).collect(), source)
}

/// Bit `i` is set iff `d[i] > t[i]`; ties map to 0.
pub fn binarize(d: &Descriptor, t: &ThresholdVector) -> Result<BinaryHash> {
    if d.dims() != t.dims() {
        return Err(Error::DimensionMismatch { left: d.dims(), right: t.dims() });
    }
    Ok(BinaryHash::from_bits(d.values().iter().zip(&t.values).map(|(v, th)| v > th)))
}

/// An id-addressed collection of equal-length hashes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HashIndex {
    n_bits: usize,
    entries: Vec<(String, BinaryHash)>,
}

impl HashIndex {
    pub fn new(n_bits: usize) -> Self {
        Self { n_bits, entries: Vec::new() }
    }

    pub fn push(&mut self, id: impl Into<String>, hash: BinaryHash) -> Result<()> {
        if hash.n_bits() != self.n_bits {
            return Err(Error::HashLengthMismatch { left: self.n_bits, right: hash.n_bits() });
        }
        self.entries.push((id.into(), hash));
        Ok(())
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, BinaryHash)] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&BinaryHash> {
        self.entries.iter().find(|(i, _)| i == id).map(|(_, h)| h)
    }

    pub fn encode(&self) -> Vec<u8> {
        let hash_bytes = self.n_bits.div_ceil(8);
        let mut out = Vec::with_capacity(14 + self.entries.len() * (4 + 16 + hash_bytes));
        out.extend_from_slice(&BHI1_MAGIC);
        out.extend_from_slice(&HASH_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_bits as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (id, hash) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&hash.to_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        check_header(&mut r, BHI1_MAGIC)?;
        let n_bits = r.u32()? as usize;
        let n_entries = r.u32()? as usize;
        let hash_bytes = n_bits.div_ceil(8);
        let mut index = Self::new(n_bits);
        for _ in 0..n_entries {
            let id_len = r.u32()? as usize;
            let id = utf8(r.take(id_len)?)?;
            let hash = BinaryHash::from_bytes(r.take(hash_bytes)?, n_bits)?;
            index.entries.push((id, hash));
        }
        trailing(&r)?;
        Ok(index)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.encode())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn check_header(r: &mut Reader<'_>, expected: [u8; 4]) -> Result<()> {
    let found = r.magic()?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    let version = r.u16()?;
    if version != HASH_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    Ok(())
}

fn utf8(bytes: &[u8]) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|e| Error::Malformed(format!("id is not UTF-8: {e}")))
}

fn trailing(r: &Reader<'_>) -> Result<()> {
    match r.remaining() {
        0 => Ok(()),
        n => Err(Error::Malformed(format!("{n} trailing bytes at offset {}", r.position()))),
    }
}
