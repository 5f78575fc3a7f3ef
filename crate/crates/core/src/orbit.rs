//! Image-space orbits under the rotation and scale groups.
//!
//! Rotation angles are clockwise as displayed (row index grows downwards).
//! On square images a rotation by `q·90° + r` is computed as `q` exact
//! quarter turns followed by a bilinear rotation by the residual `r`, so
//! orbits of quarter-turned inputs are exact cyclic shifts of each other.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted image side.
pub const MIN_IMAGE_SIDE: usize = 8;

/// Per-channel ImageNet pixel means rounded to 8 bits.
pub const IMAGENET_MEAN_RGB: [u8; 3] = [124, 117, 104];

/// An 8-bit RGB image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::ImageTooSmall { width, height, min: MIN_IMAGE_SIDE });
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidShape(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Decodes a PNG or JPEG file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer size checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn is_square(&self) -> bool {
        self.width == self.height
    }
}

/// Sampling of the rotation and scale groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitSpec {
    pub rotation_enabled: bool,
    pub rotation_steps: usize,
    pub rotation_step_degrees: f64,
    pub scale_enabled: bool,
    pub scale_steps: usize,
    pub scale_min_fraction: f64,
    pub pad_rgb: [u8; 3],
    /// `(height, width)` fed to the extractor.
    pub target_size: (usize, usize),
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            rotation_enabled: true,
            rotation_steps: 36,
            rotation_step_degrees: 10.0,
            scale_enabled: true,
            scale_steps: 10,
            scale_min_fraction: 0.5,
            pad_rgb: IMAGENET_MEAN_RGB,
            target_size: (224, 224),
        }
    }
}

impl OrbitSpec {
    /// Both groups disabled: the orbit is the input resized to `target_size`.
    pub fn identity(target_size: (usize, usize)) -> Self {
        Self { rotation_enabled: false, scale_enabled: false, target_size, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidOrbitSpec(msg));
        if self.rotation_enabled {
            if self.rotation_steps == 0 {
                return bad("rotation_steps must be >= 1".into());
            }
            let span = self.rotation_steps as f64 * self.rotation_step_degrees;
            if (span - 360.0).abs() > 1e-9 {
                return bad(format!("rotation_steps x rotation_step_degrees must equal 360, got {span}"));
            }
        }
        if self.scale_steps == 0 {
            return bad("scale_steps must be >= 1".into());
        }
        if !(self.scale_min_fraction > 0.0 && self.scale_min_fraction <= 1.0) {
            return bad(format!("scale_min_fraction {} not in (0, 1]", self.scale_min_fraction));
        }
        let (h, w) = self.target_size;
        if h < MIN_IMAGE_SIDE || w < MIN_IMAGE_SIDE {
            return bad(format!("target_size {h}x{w} below {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"));
        }
        Ok(())
    }

    pub fn n_rot(&self) -> usize {
        if self.rotation_enabled {
            self.rotation_steps
        } else {
            1
        }
    }

    pub fn n_scale(&self) -> usize {
        if self.scale_enabled {
            self.scale_steps
        } else {
            1
        }
    }

    pub fn angle(&self, r: usize) -> f64 {
        r as f64 * self.rotation_step_degrees
    }

    /// Crop side fraction `min^(k / (steps - 1))`, exactly 1 at `k = 0` and
    /// exactly `scale_min_fraction` at the last step.
    pub fn scale_fraction(&self, k: usize) -> f64 {
        if self.scale_steps <= 1 || k == 0 {
            1.0
        } else if k == self.scale_steps - 1 {
            self.scale_min_fraction
        } else {
            self.scale_min_fraction.powf(k as f64 / (self.scale_steps - 1) as f64)
        }
    }
}

/// Rotates `img` about its center, keeping its size; pixels whose source
/// falls outside the input are set to `pad_rgb`.
pub fn rotate_with_padding(img: &ImageRGB, angle_degrees: f64, pad_rgb: [u8; 3]) -> ImageRGB {
    let angle = angle_degrees.rem_euclid(360.0);
    if angle == 0.0 {
        return img.clone();
    }
    if img.is_square() {
        let quarters = (angle / 90.0).floor();
        let residual = angle - quarters * 90.0;
        let turned = (0..quarters as usize).fold(img.clone(), |acc, _| quarter_turn(&acc));
        if residual == 0.0 {
            return turned;
        }
        return bilinear_rotate(&turned, residual, pad_rgb);
    }
    if angle == 180.0 {
        return half_turn(img);
    }
    bilinear_rotate(img, angle, pad_rgb)
}

/// Exact clockwise quarter turn of a square image: `out(x, y) = in(y, n-1-x)`.
fn quarter_turn(img: &ImageRGB) -> ImageRGB {
    let n = img.width;
    let mut pixels = vec![0u8; img.pixels.len()];
    for y in 0..n {
        for x in 0..n {
            let o = (y * n + x) * 3;
            pixels[o..o + 3].copy_from_slice(&img.pixel(y, n - 1 - x));
        }
    }
    ImageRGB { width: n, height: n, pixels }
}

fn half_turn(img: &ImageRGB) -> ImageRGB {
    let (w, h) = (img.width, img.height);
    let mut pixels = vec![0u8; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * 3;
            pixels[o..o + 3].copy_from_slice(&img.pixel(w - 1 - x, h - 1 - y));
        }
    }
    ImageRGB { width: w, height: h, pixels }
}

const EDGE_EPS: f64 = 1e-9;

fn bilinear_rotate(img: &ImageRGB, angle_degrees: f64, pad: [u8; 3]) -> ImageRGB {
    let (w, h) = (img.width, img.height);
    let (sin, cos) = angle_degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let max_x = w as f64 - 1.0;
    let max_y = h as f64 - 1.0;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            if sx < -EDGE_EPS || sy < -EDGE_EPS || sx > max_x + EDGE_EPS || sy > max_y + EDGE_EPS {
                pixels.extend_from_slice(&pad);
            } else {
                pixels.extend_from_slice(&sample_bilinear(img, sx.clamp(0.0, max_x), sy.clamp(0.0, max_y)));
            }
        }
    }
    ImageRGB { width: w, height: h, pixels }
}

/// Bilinear sample at in-range continuous coordinates.
#[inline]
fn sample_bilinear(img: &ImageRGB, sx: f64, sy: f64) -> [u8; 3] {
    let x0 = (sx.floor() as usize).min(img.width.saturating_sub(2));
    let y0 = (sy.floor() as usize).min(img.height.saturating_sub(2));
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let (p00, p10, p01, p11) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = to_u8(top * (1.0 - fy) + bottom * fy);
    }
    out
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear resize of the region `[x0, x0+cw) × [y0, y0+ch)` (pixel-edge
/// coordinates) to `out_w × out_h`, sampling at output pixel centers.
fn resize_region(img: &ImageRGB, (x0, y0, cw, ch): (f64, f64, f64, f64), out_w: usize, out_h: usize) -> ImageRGB {
    let max_x = img.width as f64 - 1.0;
    let max_y = img.height as f64 - 1.0;
    let step_x = cw / out_w as f64;
    let step_y = ch / out_h as f64;
    let mut pixels = Vec::with_capacity(out_w * out_h * 3);
    for oy in 0..out_h {
        let sy = (y0 + (oy as f64 + 0.5) * step_y - 0.5).clamp(0.0, max_y);
        for ox in 0..out_w {
            let sx = (x0 + (ox as f64 + 0.5) * step_x - 0.5).clamp(0.0, max_x);
            pixels.extend_from_slice(&sample_bilinear(img, sx, sy));
        }
    }
    ImageRGB { width: out_w, height: out_h, pixels }
}

/// Centered crop of side fraction `spec.scale_fraction(k)`, resized to
/// `spec.target_size`.
pub fn center_crop_geometric(img: &ImageRGB, k: usize, spec: &OrbitSpec) -> Result<ImageRGB> {
    if k >= spec.scale_steps.max(1) {
        return Err(Error::InvalidOrbitSpec(format!(
            "crop index {k} out of range for {} scale steps",
            spec.scale_steps
        )));
    }
    let s = spec.scale_fraction(k);
    let (w, h) = (img.width as f64, img.height as f64);
    let (cw, ch) = (w * s, h * s);
    let region = ((w - cw) / 2.0, (h - ch) / 2.0, cw, ch);
    let (th, tw) = spec.target_size;
    Ok(resize_region(img, region, tw, th))
}

/// All `n_rot × n_scale` orbit images, rotation-major: entry `r * n_scale + s`
/// is the original rotated by `r · step`, then cropped at scale `s`.
pub fn generate_orbit_images(img: &ImageRGB, spec: &OrbitSpec) -> Result<Vec<ImageRGB>> {
    spec.validate()?;
    let n_scale = spec.n_scale();
    let per_rotation: Vec<Vec<ImageRGB>> = (0..spec.n_rot())
        .into_par_iter()
        .map(|r| {
            let rotated = rotate_with_padding(img, spec.angle(r), spec.pad_rgb);
            (0..n_scale).map(|s| center_crop_geometric(&rotated, s, spec)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_rotation.into_iter().flatten().collect())
}
