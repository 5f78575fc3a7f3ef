//! Shared numeric containers and distance primitives.
//!
//! Values are stored as `f32`; every reduction accumulates in `f64`.

use std::fmt;

use crate::error::{Error, Result};

/// Axis sizes of a [`FeatureOrbitTensor`], in storage order `(r, s, c, h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrbitShape {
    pub n_rot: usize,
    pub n_scale: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl OrbitShape {
    pub fn new(n_rot: usize, n_scale: usize, channels: usize, height: usize, width: usize) -> Self {
        Self { n_rot, n_scale, channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.n_rot * self.n_scale * self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat offset of `(r, s, c, h, w)`, `w` fastest.
    #[inline]
    pub fn offset(&self, r: usize, s: usize, c: usize, h: usize, w: usize) -> usize {
        (((r * self.n_scale + s) * self.channels + c) * self.height + h) * self.width + w
    }

    fn validate(&self) -> Result<()> {
        let dims = [self.n_rot, self.n_scale, self.channels, self.height, self.width];
        if dims.contains(&0) {
            return Err(Error::InvalidShape(format!("all axes must be >= 1, got {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for OrbitShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{},{})", self.n_rot, self.n_scale, self.channels, self.height, self.width)
    }
}

/// Which orbit axes were produced by orbit generation. A disabled group
/// still has an axis of size 1 holding the identity element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AxisPresence {
    pub rotation: bool,
    pub scale: bool,
}

impl AxisPresence {
    pub const NONE: AxisPresence = AxisPresence { rotation: false, scale: false };
    pub const ALL: AxisPresence = AxisPresence { rotation: true, scale: true };

    pub fn to_bits(self) -> u32 {
        (self.rotation as u32) | ((self.scale as u32) << 1)
    }

    pub fn from_bits(bits: u32) -> Self {
        Self { rotation: bits & 1 != 0, scale: bits & 2 != 0 }
    }
}

/// Axes already reduced by moment pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct PooledAxes {
    pub rotation: bool,
    pub scale: bool,
    pub translation: bool,
}

/// Per-image stack of feature maps indexed by `(rotation, scale, channel, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureOrbitTensor {
    data: Vec<f32>,
    shape: OrbitShape,
    axes: AxisPresence,
    pooled: PooledAxes,
}

impl FeatureOrbitTensor {
    /// Builds a tensor, checking the element count and that every value is finite.
    pub fn new(data: Vec<f32>, shape: OrbitShape, axes: AxisPresence) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::InvalidShape(format!("shape {shape} needs {} values, got {}", shape.len(), data.len())));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { data, shape, axes, pooled: PooledAxes::default() })
    }

    pub(crate) fn from_parts(data: Vec<f32>, shape: OrbitShape, axes: AxisPresence, pooled: PooledAxes) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        Self { data, shape, axes, pooled }
    }

    /// Replaces the generated-axis flags, e.g. with the orbit spec's group switches.
    pub fn with_axes(mut self, axes: AxisPresence) -> Self {
        self.axes = axes;
        self
    }

    pub fn shape(&self) -> OrbitShape {
        self.shape
    }

    pub fn axes(&self) -> AxisPresence {
        self.axes
    }

    pub(crate) fn pooled(&self) -> PooledAxes {
        self.pooled
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, r: usize, s: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.shape.offset(r, s, c, h, w)]
    }

    /// The `channels × height × width` map of orbit element `(r, s)`.
    pub fn map(&self, r: usize, s: usize) -> &[f32] {
        let n = self.shape.channels * self.shape.height * self.shape.width;
        let start = self.shape.offset(r, s, 0, 0, 0);
        &self.data[start..start + n]
    }
}

/// A flat global descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f32>,
    sequence_tag: String,
    normalized: bool,
}

impl Descriptor {
    pub fn new(values: Vec<f32>, sequence_tag: impl Into<String>) -> Self {
        Self { values, sequence_tag: sequence_tag.into(), normalized: false }
    }

    pub(crate) fn with_normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn sequence_tag(&self) -> &str {
        &self.sequence_tag
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

/// Scales `d` to unit Euclidean norm.
///
/// A zero vector is returned unchanged with `normalized = false`, so that
/// degenerate descriptors (all-dead channels) do not abort a batch.
pub fn l2_normalize(d: &Descriptor) -> Descriptor {
    let norm = d.norm();
    if norm == 0.0 {
        return d.clone().with_normalized(false);
    }
    let values = d.values.iter().map(|&v| (v as f64 / norm) as f32).collect();
    Descriptor { values, sequence_tag: d.sequence_tag.clone(), normalized: true }
}

pub fn euclidean_distance(a: &Descriptor, b: &Descriptor) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch { left: a.dims(), right: b.dims() });
    }
    Ok(squared_distance(&a.values, &b.values).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Bit-packed binary code. Bit `i` lives in byte `i / 8` at position `i % 8`;
/// words are stored as `u64` so that their little-endian bytes are that layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryHash {
    words: Vec<u64>,
    n_bits: usize,
}

impl BinaryHash {
    pub fn zeros(n_bits: usize) -> Self {
        Self { words: vec![0; n_bits.div_ceil(64)], n_bits }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut words = Vec::new();
        let mut n_bits = 0;
        for bit in bits {
            if n_bits % 64 == 0 {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1 << (n_bits % 64);
            }
            n_bits += 1;
        }
        Self { words, n_bits }
    }

    /// Unpacks `ceil(n_bits / 8)` bytes. Padding bits in the last byte must be zero.
    pub fn from_bytes(bytes: &[u8], n_bits: usize) -> Result<Self> {
        let n_bytes = n_bits.div_ceil(8);
        if bytes.len() != n_bytes {
            return Err(Error::Malformed(format!("{n_bits}-bit hash needs {n_bytes} bytes, got {}", bytes.len())));
        }
        if !n_bits.is_multiple_of(8) && bytes[n_bytes - 1] >> (n_bits % 8) != 0 {
            return Err(Error::Malformed("nonzero padding bits in hash".into()));
        }
        let words = bytes
            .chunks(8)
            .map(|chunk| {
                let mut buf = [0u8; 8];
                buf[..chunk.len()].copy_from_slice(chunk);
                u64::from_le_bytes(buf)
            })
            .collect();
        Ok(Self { words, n_bits })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.n_bits.div_ceil(8));
        out
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.n_bits, "bit {i} out of range for {}-bit hash", self.n_bits);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.n_bits, "bit {i} out of range for {}-bit hash", self.n_bits);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Number of differing bits, computed as a popcount of XOR-ed words.
pub fn hamming_distance(a: &BinaryHash, b: &BinaryHash) -> Result<u32> {
    if a.n_bits != b.n_bits {
        return Err(Error::HashLengthMismatch { left: a.n_bits, right: b.n_bits });
    }
    Ok(a.words.iter().zip(&b.words).map(|(x, y)| (x ^ y).count_ones()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn desc(v: &[f32]) -> Descriptor {
        Descriptor::new(v.to_vec(), "test")
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&desc(&[3.0, 4.0]));
        assert!(n.is_normalized());
        assert_relative_eq!(n.values()[0], 0.6, epsilon = 1e-7);
        assert_relative_eq!(n.values()[1], 0.8, epsilon = 1e-7);

        let n = l2_normalize(&desc(&[1.0, 0.0, 0.0]));
        assert_eq!(n.values(), &[1.0, 0.0, 0.0]);

        let z = l2_normalize(&desc(&[0.0, 0.0]));
        assert_eq!(z.values(), &[0.0, 0.0]);
        assert!(!z.is_normalized());
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean_distance(&desc(&[0.0, 0.0]), &desc(&[3.0, 4.0])).unwrap(), 5.0);
        let x = desc(&[0.3, -1.5, 2.0]);
        assert_eq!(euclidean_distance(&x, &x).unwrap(), 0.0);
        let d = euclidean_distance(&desc(&[1.0, 1.0]), &desc(&[2.0, 3.0])).unwrap();
        assert_relative_eq!(d, 2.236_067_977_499_79, epsilon = 1e-12);
    }

    #[test]
    fn euclidean_mismatch_names_both_dims() {
        let err = euclidean_distance(&desc(&[1.0]), &desc(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { left: 1, right: 2 }));
        assert!(err.to_string().contains('1') && err.to_string().contains('2'));
    }

    #[test]
    fn hamming_examples() {
        let a = BinaryHash::from_bits([true, false, true, false]);
        let b = BinaryHash::from_bits([false, true, true, false]);
        assert_eq!(hamming_distance(&a, &b).unwrap(), 2);
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);

        let ones = BinaryHash::from_bits(std::iter::repeat_n(true, 512));
        let zeros = BinaryHash::zeros(512);
        assert_eq!(hamming_distance(&ones, &zeros).unwrap(), 512);

        let err = hamming_distance(&a, &zeros).unwrap_err();
        assert!(matches!(err, Error::HashLengthMismatch { left: 4, right: 512 }));
    }

    #[test]
    fn byte_layout_is_little_endian_within_bytes() {
        // bits 0 and 9 set -> byte 0 = 0b0000_0001, byte 1 = 0b0000_0010
        let mut h = BinaryHash::zeros(12);
        h.set(0, true);
        h.set(9, true);
        assert_eq!(h.to_bytes(), vec![0x01, 0x02]);
        assert_eq!(BinaryHash::from_bytes(&[0x01, 0x02], 12).unwrap(), h);
        assert!(BinaryHash::from_bytes(&[0x01, 0x12], 12).is_err());
    }

    #[test]
    fn tensor_rejects_bad_input() {
        let shape = OrbitShape::new(1, 1, 2, 1, 1);
        assert!(FeatureOrbitTensor::new(vec![0.0], shape, AxisPresence::NONE).is_err());
        assert!(matches!(
            FeatureOrbitTensor::new(vec![0.0, f32::NAN], shape, AxisPresence::NONE),
            Err(Error::NonFinite { index: 1 })
        ));
        let empty = OrbitShape::new(1, 1, 0, 1, 1);
        assert!(FeatureOrbitTensor::new(vec![], empty, AxisPresence::NONE).is_err());
    }

    fn naive_hamming(a: &BinaryHash, b: &BinaryHash) -> u32 {
        (0..a.n_bits()).filter(|&i| a.bit(i) != b.bit(i)).count() as u32
    }

    proptest! {
        #[test]
        fn hamming_matches_per_bit_loop(bits in (1usize..=4096).prop_flat_map(|n| {
            (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n))
        })) {
            let a = BinaryHash::from_bits(bits.0);
            let b = BinaryHash::from_bits(bits.1);
            prop_assert_eq!(hamming_distance(&a, &b).unwrap(), naive_hamming(&a, &b));
            prop_assert_eq!(hamming_distance(&a, &b).unwrap(), hamming_distance(&b, &a).unwrap());
        }

        #[test]
        fn triangle_inequality(
            v in (1usize..64).prop_flat_map(|n| proptest::collection::vec(
                proptest::collection::vec(-100.0f32..100.0, n), 3))
        ) {
            let (a, b, c) = (desc(&v[0]), desc(&v[1]), desc(&v[2]));
            let ab = euclidean_distance(&a, &b).unwrap();
            let bc = euclidean_distance(&b, &c).unwrap();
            let ac = euclidean_distance(&a, &c).unwrap();
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-6) + 1e-12);
            prop_assert_eq!(ab, euclidean_distance(&b, &a).unwrap());
        }

        #[test]
        fn normalize_is_idempotent(v in proptest::collection::vec(-1e3f32..1e3, 1..256)) {
            let once = l2_normalize(&desc(&v));
            let twice = l2_normalize(&once);
            for (x, y) in once.values().iter().zip(twice.values()) {
                prop_assert!((x - y).abs() <= 1e-6);
            }
            if once.is_normalized() {
                prop_assert!((once.norm() - 1.0).abs() <= 1e-4);
            }
        }
    }
}
