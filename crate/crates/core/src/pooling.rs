//! Moment pooling over orbit axes and chained pooling sequences.
//!
//! Sums over a group are finite sums over the sampled orbit with uniform
//! weights. A sequence is applied in list order, so the first step is the
//! innermost pooling: `A:scale,S:trans,M:rot` averages over scales, takes the
//! standard deviation over the spatial grid, then the max over rotations.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Descriptor, FeatureOrbitTensor, OrbitShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Moment {
    Average,
    Max,
    Std,
}

impl Moment {
    pub fn symbol(self) -> &'static str {
        match self {
            Moment::Average => "A",
            Moment::Max => "M",
            Moment::Std => "S",
        }
    }
}

impl fmt::Display for Moment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// An orbit axis. `Translation` is the flattened `height × width` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Rotation,
    Scale,
    Translation,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Rotation => "rot",
            Axis::Scale => "scale",
            Axis::Translation => "trans",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PoolStep {
    pub moment: Moment,
    pub axis: Axis,
}

impl PoolStep {
    pub fn new(moment: Moment, axis: Axis) -> Self {
        Self { moment, axis }
    }
}

/// Ordered pooling steps over pairwise distinct axes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PoolingSequence {
    steps: Vec<PoolStep>,
}

impl PoolingSequence {
    pub fn new(steps: Vec<PoolStep>) -> Result<Self> {
        for (i, a) in steps.iter().enumerate() {
            if steps[..i].iter().any(|b| b.axis == a.axis) {
                return Err(Error::InvalidSequence(format!("axis `{}` appears twice", a.axis)));
            }
        }
        Ok(Self { steps })
    }

    /// The empty sequence: flatten the raw tensor.
    pub fn raw() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> &[PoolStep] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn consumes(&self, axis: Axis) -> bool {
        self.steps.iter().any(|s| s.axis == axis)
    }

    /// Filesystem-safe name, `raw` for the empty sequence.
    pub fn slug(&self) -> String {
        if self.is_empty() {
            return "raw".into();
        }
        self.steps.iter().map(|s| format!("{}-{}", s.moment, s.axis)).collect::<Vec<_>>().join("_")
    }
}

/// `moment:axis` tokens separated by commas, e.g. `A:scale,S:trans,M:rot`.
impl FromStr for PoolingSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::raw());
        }
        let steps = s
            .split(',')
            .map(|token| {
                let token = token.trim();
                let (m, a) = token
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidSequence(format!("token `{token}` is not moment:axis")))?;
                let moment = match m.trim() {
                    "A" => Moment::Average,
                    "M" => Moment::Max,
                    "S" => Moment::Std,
                    other => return Err(Error::InvalidSequence(format!("unknown moment `{other}`"))),
                };
                let axis = match a.trim() {
                    "rot" => Axis::Rotation,
                    "scale" => Axis::Scale,
                    "trans" => Axis::Translation,
                    other => return Err(Error::InvalidSequence(format!("unknown axis `{other}`"))),
                };
                Ok(PoolStep { moment, axis })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }
}

impl fmt::Display for PoolingSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", step.moment, step.axis)?;
        }
        Ok(())
    }
}

/// Reduces one orbit fiber. `Std` is the population standard deviation,
/// zero for constant fibers.
pub fn moment_reduce(samples: &[f64], m: Moment) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(reduce(samples, m))
}

#[inline]
fn reduce(samples: &[f64], m: Moment) -> f64 {
    let n = samples.len() as f64;
    match m {
        Moment::Average => samples.iter().sum::<f64>() / n,
        Moment::Max => samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Moment::Std => {
            let first = samples[0];
            if samples.iter().all(|&v| v == first) {
                return 0.0;
            }
            // E[(f - Ef)^2], equal to E[f^2] - (Ef)^2 without the cancellation
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            var.max(0.0).sqrt()
        }
    }
}

/// Sorts before summing so the result is bit-identical under any
/// permutation of the fiber.
#[inline]
fn reduce_symmetric(fiber: &mut [f64], m: Moment) -> f64 {
    if m != Moment::Max {
        fiber.sort_unstable_by(f64::total_cmp);
    }
    reduce(fiber, m)
}

const POOL_CHUNK: usize = 4096;

/// Reduces `axis` to size 1 with moment `m`; every other axis is untouched.
pub fn pool_axis(t: &FeatureOrbitTensor, axis: Axis, m: Moment) -> Result<FeatureOrbitTensor> {
    let s = t.shape();
    let mut pooled = t.pooled();
    let already = match axis {
        Axis::Rotation => std::mem::replace(&mut pooled.rotation, true),
        Axis::Scale => std::mem::replace(&mut pooled.scale, true),
        Axis::Translation => std::mem::replace(&mut pooled.translation, true),
    };
    if already {
        return Err(Error::AxisAlreadyPooled(axis));
    }
    // View the tensor as (outer, len, inner) with the pooled axis in the middle.
    let spatial = s.height * s.width;
    let (outer, len, inner, out_shape) = match axis {
        Axis::Rotation => (1, s.n_rot, s.n_scale * s.channels * spatial, OrbitShape { n_rot: 1, ..s }),
        Axis::Scale => (s.n_rot, s.n_scale, s.channels * spatial, OrbitShape { n_scale: 1, ..s }),
        Axis::Translation => (s.n_rot * s.n_scale * s.channels, spatial, 1, OrbitShape { height: 1, width: 1, ..s }),
    };
    let data = t.data();
    let mut out = vec![0f32; outer * inner];
    out.par_chunks_mut(POOL_CHUNK).enumerate().for_each_init(
        || vec![0f64; len],
        |fiber, (chunk_idx, chunk)| {
            for (k, slot) in chunk.iter_mut().enumerate() {
                let flat = chunk_idx * POOL_CHUNK + k;
                let (o, i) = (flat / inner, flat % inner);
                let base = o * len * inner + i;
                for (j, f) in fiber.iter_mut().enumerate() {
                    *f = data[base + j * inner] as f64;
                }
                *slot = reduce_symmetric(fiber, m) as f32;
            }
        },
    );
    Ok(FeatureOrbitTensor::from_parts(out, out_shape, t.axes(), pooled))
}

/// Applies `seq` in order, then flattens the surviving axes in
/// `(r, s, c, h, w)` order.
pub fn apply_sequence(t: &FeatureOrbitTensor, seq: &PoolingSequence) -> Result<Descriptor> {
    let axes = t.axes();
    for step in seq.steps() {
        let generated = match step.axis {
            Axis::Rotation => axes.rotation,
            Axis::Scale => axes.scale,
            Axis::Translation => true,
        };
        if !generated {
            return Err(Error::AxisNotGenerated(step.axis));
        }
    }
    let mut current = Cow::Borrowed(t);
    for step in seq.steps() {
        current = Cow::Owned(pool_axis(&current, step.axis, step.moment)?);
    }
    Ok(Descriptor::new(current.into_owned().into_data(), sequence_tag(seq)))
}

pub fn sequence_tag(seq: &PoolingSequence) -> String {
    format!("seq={seq};flatten=r,s,c,h,w")
}

/// Descriptor length `apply_sequence` produces for `shape`.
pub fn output_dims(shape: OrbitShape, seq: &PoolingSequence) -> usize {
    let rot = if seq.consumes(Axis::Rotation) { 1 } else { shape.n_rot };
    let scale = if seq.consumes(Axis::Scale) { 1 } else { shape.n_scale };
    let spatial = if seq.consumes(Axis::Translation) { 1 } else { shape.height * shape.width };
    rot * scale * shape.channels * spatial
}
