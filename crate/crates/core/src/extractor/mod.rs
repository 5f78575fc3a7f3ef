//! Feature extraction boundary: a seeded toy convolutional network and the
//! FOT1 feature-file reader/writer shared with external exporters.

mod fot;

pub use fot::{
    decode_feature_file, encode_feature_file, read_feature_file, write_feature_file, FOT1_MAGIC, FOT1_VERSION,
};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::ImageRGB;
use crate::types::{AxisPresence, FeatureOrbitTensor, OrbitShape};

/// One `channels × height × width` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Vec<f32>,
    channels: usize,
    height: usize,
    width: usize,
}

impl FeatureMap {
    pub fn new(data: Vec<f32>, channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidShape(format!("feature map {channels}x{height}x{width}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::InvalidShape(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { data, channels, height, width })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f32 {
        self.data[(c * self.height + h) * self.width + w]
    }

    /// 512 channels of 7×7, the layout of a pool5 layer.
    pub fn is_pool5_compatible(&self) -> bool {
        self.channels == 512 && self.height == 7 && self.width == 7
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyExtractorConfig {
    pub seed: u64,
    pub n_stages: usize,
    pub channels_out: usize,
    pub kernel_size: usize,
    pub out_spatial: usize,
}

impl Default for ToyExtractorConfig {
    fn default() -> Self {
        Self { seed: 0, n_stages: 3, channels_out: 64, kernel_size: 3, out_spatial: 7 }
    }
}

impl ToyExtractorConfig {
    /// Smallest image side the network accepts.
    pub fn min_side(&self) -> usize {
        self.out_spatial << self.n_stages
    }

    fn validate(&self) -> Result<()> {
        if self.channels_out == 0 || self.out_spatial == 0 {
            return Err(Error::Config("toy extractor needs channels_out >= 1 and out_spatial >= 1".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        Ok(())
    }
}

/// Filters for one convolution stage, laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone)]
struct ConvStage {
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f32>,
}

/// A seeded stack of (convolution, ReLU, 2×2 max-pool) stages followed by an
/// adaptive max-pool. Weights are random, never trained.
#[derive(Debug, Clone)]
pub struct ToyExtractor {
    cfg: ToyExtractorConfig,
    stages: Vec<ConvStage>,
}

impl ToyExtractor {
    pub fn new(cfg: ToyExtractorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let k2 = cfg.kernel_size * cfg.kernel_size;
        let stages = (0..cfg.n_stages)
            .map(|i| {
                let in_channels = if i == 0 { 3 } else { cfg.channels_out };
                let bound = 1.0 / ((in_channels * k2) as f32).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                let weights = (0..cfg.channels_out * in_channels * k2).map(|_| dist.sample(&mut rng)).collect();
                ConvStage { in_channels, out_channels: cfg.channels_out, weights }
            })
            .collect();
        Ok(Self { cfg, stages })
    }

    pub fn config(&self) -> &ToyExtractorConfig {
        &self.cfg
    }

    pub fn extract(&self, img: &ImageRGB) -> Result<FeatureMap> {
        let min = self.cfg.min_side();
        if img.width() < min || img.height() < min {
            return Err(Error::ImageTooSmall { width: img.width(), height: img.height(), min });
        }
        let (mut h, mut w) = (img.height(), img.width());
        // planar [c][y][x], scaled to [0, 1]
        let mut planes = vec![0f32; 3 * h * w];
        for (i, px) in img.pixels().chunks_exact(3).enumerate() {
            for c in 0..3 {
                planes[c * h * w + i] = px[c] as f32 / 255.0;
            }
        }
        let mut channels = 3;
        for stage in &self.stages {
            debug_assert_eq!(stage.in_channels, channels);
            let conv = convolve_same(&planes, stage, h, w, self.cfg.kernel_size);
            let (pooled, ph, pw) = relu_max_pool_2x2(&conv, stage.out_channels, h, w);
            planes = pooled;
            channels = stage.out_channels;
            h = ph;
            w = pw;
        }
        let out = adaptive_max_pool(&planes, channels, h, w, self.cfg.out_spatial);
        FeatureMap::new(out, channels, self.cfg.out_spatial, self.cfg.out_spatial)
    }

    /// Extracts every orbit image and stacks the maps rotation-major.
    pub fn extract_orbit(&self, images: &[ImageRGB], n_rot: usize, n_scale: usize) -> Result<FeatureOrbitTensor> {
        let maps = images.par_iter().map(|img| self.extract(img)).collect::<Result<Vec<_>>>()?;
        assemble_orbit_tensor(maps, n_rot, n_scale)
    }
}

/// Convenience wrapper building the filters on every call.
pub fn toy_extract(img: &ImageRGB, cfg: &ToyExtractorConfig) -> Result<FeatureMap> {
    ToyExtractor::new(cfg.clone())?.extract(img)
}

/// Zero-padded "same" convolution without bias.
fn convolve_same(input: &[f32], stage: &ConvStage, h: usize, w: usize, k: usize) -> Vec<f32> {
    let pad = k / 2;
    let plane = h * w;
    let mut out = vec![0f32; stage.out_channels * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(o, out_plane)| {
        for i in 0..stage.in_channels {
            let in_plane = &input[i * plane..(i + 1) * plane];
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = stage.weights[((o * stage.in_channels + i) * k + ky) * k + kx];
                    // output x reads input x + kx - pad
                    let x_lo = pad.saturating_sub(kx);
                    let x_hi = (w + pad).saturating_sub(kx).min(w);
                    if x_lo >= x_hi {
                        continue;
                    }
                    let y_lo = pad.saturating_sub(ky);
                    let y_hi = (h + pad).saturating_sub(ky).min(h);
                    for y in y_lo..y_hi {
                        let sy = y + ky - pad;
                        let src = &in_plane[sy * w + x_lo + kx - pad..sy * w + x_hi + kx - pad];
                        let dst = &mut out_plane[y * w + x_lo..y * w + x_hi];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        }
    });
    out
}

fn relu_max_pool_2x2(input: &[f32], channels: usize, h: usize, w: usize) -> (Vec<f32>, usize, usize) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(channels * ph * pw);
    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for y in 0..ph {
            for x in 0..pw {
                let m = plane[2 * y * w + 2 * x]
                    .max(plane[2 * y * w + 2 * x + 1])
                    .max(plane[(2 * y + 1) * w + 2 * x])
                    .max(plane[(2 * y + 1) * w + 2 * x + 1]);
                out.push(m.max(0.0));
            }
        }
    }
    (out, ph, pw)
}

/// Max over bins `[floor(i·n/out), ceil((i+1)·n/out))` per axis.
fn adaptive_max_pool(input: &[f32], channels: usize, h: usize, w: usize, out: usize) -> Vec<f32> {
    let bin = |i: usize, n: usize| (i * n / out, ((i + 1) * n).div_ceil(out));
    let mut result = Vec::with_capacity(channels * out * out);
    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for oy in 0..out {
            let (y0, y1) = bin(oy, h);
            for ox in 0..out {
                let (x0, x1) = bin(ox, w);
                let mut m = f32::NEG_INFINITY;
                for y in y0..y1 {
                    for &v in &plane[y * w + x0..y * w + x1] {
                        m = m.max(v);
                    }
                }
                result.push(m);
            }
        }
    }
    result
}

/// Stacks `n_rot × n_scale` maps in rotation-major order. An axis is marked
/// generated when its size exceeds 1.
pub fn assemble_orbit_tensor(maps: Vec<FeatureMap>, n_rot: usize, n_scale: usize) -> Result<FeatureOrbitTensor> {
    if n_rot == 0 || n_scale == 0 || maps.len() != n_rot * n_scale {
        return Err(Error::InvalidShape(format!(
            "expected {n_rot} x {n_scale} = {} maps, got {}",
            n_rot * n_scale,
            maps.len()
        )));
    }
    let (c, h, w) = (maps[0].channels, maps[0].height, maps[0].width);
    if let Some((i, m)) = maps.iter().enumerate().find(|(_, m)| (m.channels, m.height, m.width) != (c, h, w)) {
        return Err(Error::InvalidShape(format!(
            "map {i} is {}x{}x{}, expected {c}x{h}x{w}",
            m.channels, m.height, m.width
        )));
    }
    let mut data = Vec::with_capacity(maps.len() * c * h * w);
    for m in maps {
        data.extend_from_slice(&m.data);
    }
    let axes = AxisPresence { rotation: n_rot > 1, scale: n_scale > 1 };
    FeatureOrbitTensor::new(data, OrbitShape::new(n_rot, n_scale, c, h, w), axes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::smooth_image;

    fn small_cfg(seed: u64) -> ToyExtractorConfig {
        ToyExtractorConfig { seed, n_stages: 2, channels_out: 8, kernel_size: 3, out_spatial: 7 }
    }

    #[test]
    fn zero_image_gives_zero_features() {
        let img = ImageRGB::filled(28, 28, [0, 0, 0]).unwrap();
        let fm = toy_extract(&img, &small_cfg(1)).unwrap();
        assert_eq!((fm.channels(), fm.height(), fm.width()), (8, 7, 7));
        assert!(fm.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let img = smooth_image(32, 32, 4);
        let a = toy_extract(&img, &small_cfg(7)).unwrap();
        let b = toy_extract(&img, &small_cfg(7)).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = toy_extract(&img, &small_cfg(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sensitive_to_single_pixel() {
        let img = smooth_image(28, 28, 2);
        let mut pixels = img.pixels().to_vec();
        pixels[(14 * 28 + 14) * 3] ^= 0x80;
        let changed = ImageRGB::new(28, 28, pixels).unwrap();
        let a = toy_extract(&img, &small_cfg(3)).unwrap();
        let b = toy_extract(&changed, &small_cfg(3)).unwrap();
        assert!(a.data().iter().zip(b.data()).any(|(x, y)| x != y));
    }

    #[test]
    fn too_small_image_reports_minimum() {
        let img = ImageRGB::filled(27, 40, [1, 1, 1]).unwrap();
        let err = toy_extract(&img, &small_cfg(0)).unwrap_err();
        assert!(matches!(err, Error::ImageTooSmall { min: 28, .. }));
        assert!(err.to_string().contains("28x28"));
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let stage =
            ConvStage { in_channels: 2, out_channels: 1, weights: (0..18).map(|i| i as f32 * 0.1 - 0.7).collect() };
        let (h, w) = (4, 5);
        let input: Vec<f32> = (0..2 * h * w).map(|i| ((i * 7) % 11) as f32).collect();
        let out = convolve_same(&input, &stage, h, w, 3);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f32;
                for i in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                acc += stage.weights[(i * 3 + ky) * 3 + kx]
                                    * input[i * h * w + sy as usize * w + sx as usize];
                            }
                        }
                    }
                }
                assert!((out[y * w + x] - acc).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn adaptive_pool_bins_cover_input() {
        let input: Vec<f32> = (0..10 * 10).map(|i| i as f32).collect();
        let out = adaptive_max_pool(&input, 1, 10, 10, 7);
        assert_eq!(out.len(), 49);
        assert_eq!(out[48], 99.0);
        assert_eq!(out[0], 11.0);
    }

    #[test]
    fn assemble_shapes_and_order() {
        let map = |v: f32| FeatureMap::new(vec![v; 2 * 3 * 3], 2, 3, 3).unwrap();
        let t = assemble_orbit_tensor(vec![map(0.0)], 1, 1).unwrap();
        assert_eq!(t.shape(), OrbitShape::new(1, 1, 2, 3, 3));

        let t = assemble_orbit_tensor((0..4).map(|i| map(i as f32)).collect(), 4, 1).unwrap();
        assert_eq!(t.map(2, 0), map(2.0).data());
        assert!(t.axes().rotation && !t.axes().scale);

        assert!(assemble_orbit_tensor((0..3).map(|i| map(i as f32)).collect(), 2, 2).is_err());
        let mixed = vec![map(0.0), FeatureMap::new(vec![0.0; 9], 1, 3, 3).unwrap()];
        assert!(assemble_orbit_tensor(mixed, 2, 1).is_err());
    }

    #[test]
    fn pool5_sized_orbit() {
        let maps = (0..360).map(|_| FeatureMap::new(vec![0.5; 512 * 49], 512, 7, 7).unwrap()).collect();
        let t = assemble_orbit_tensor(maps, 36, 10).unwrap();
        assert_eq!(t.shape(), OrbitShape::new(36, 10, 512, 7, 7));
    }
}
