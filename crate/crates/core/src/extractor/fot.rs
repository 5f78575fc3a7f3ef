//! FOT1: one image's whole feature orbit.
//!
//! ```text
//! 0..4    "FOT1"
//! 4..6    version (u16 LE) = 1
//! 6..8    reserved, zero
//! 8..28   n_rot, n_scale, channels, height, width (u32 LE)
//! 28..32  flags (u32 LE): bit 0 rotation generated, bit 1 scale generated
//! 32..    f32 LE payload, index order (r, s, c, h, w), w fastest
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader};
use crate::types::{AxisPresence, FeatureOrbitTensor, OrbitShape};

pub const FOT1_MAGIC: [u8; 4] = *b"FOT1";
pub const FOT1_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

pub fn encode_feature_file(t: &FeatureOrbitTensor) -> Vec<u8> {
    let s = t.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * s.len());
    out.extend_from_slice(&FOT1_MAGIC);
    out.extend_from_slice(&FOT1_VERSION.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    for d in [s.n_rot, s.n_scale, s.channels, s.height, s.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&t.axes().to_bits().to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureOrbitTensor> {
    let mut r = Reader::new(bytes);
    let magic = r.magic()?;
    if magic != FOT1_MAGIC {
        return Err(Error::BadMagic { expected: FOT1_MAGIC, found: magic });
    }
    let version = r.u16()?;
    if version != FOT1_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if r.u16()? != 0 {
        return Err(Error::Malformed("FOT1 reserved bytes must be zero".into()));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let axes = AxisPresence::from_bits(r.u32()?);
    let shape = OrbitShape::new(dims[0], dims[1], dims[2], dims[3], dims[4]);
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let payload = count
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Malformed(format!("FOT1 shape {shape} overflows")))?;
    if r.remaining() < payload {
        return Err(Error::Truncated { expected: HEADER_LEN + payload, found: bytes.len() });
    }
    if r.remaining() > payload {
        return Err(Error::Malformed(format!("{} trailing bytes after FOT1 payload", r.remaining() - payload)));
    }
    let data = r.take(payload)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    FeatureOrbitTensor::new(data, shape, axes)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureOrbitTensor> {
    decode_feature_file(&std::fs::read(path)?)
}

/// Writes atomically (temp file + rename).
pub fn write_feature_file(t: &FeatureOrbitTensor, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_feature_file(t))
}
