//! Seeded synthetic images and benchmarks for tests, examples, and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::orbit::{rotate_with_padding, ImageRGB, IMAGENET_MEAN_RGB};
use crate::retrieval::{DatasetManifest, GroundTruth, ManifestImage, Protocol, Role};

/// A smooth image built from a few random plane waves and Gaussian blobs per channel.
pub fn smooth_image(width: usize, height: usize, seed: u64) -> ImageRGB {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f64; 5]> = (0..9)
        .map(|_| {
            [
                rng.gen_range(0.0..3.0),                   // channel
                rng.gen_range(0.02..0.25),                 // frequency
                rng.gen_range(0.0..std::f64::consts::TAU), // direction
                rng.gen_range(0.0..std::f64::consts::TAU), // phase
                rng.gen_range(20.0..60.0),                 // amplitude
            ]
        })
        .collect();
    let blobs: Vec<[f64; 6]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
                rng.gen_range(2.0..(width.min(height) as f64 / 4.0).max(2.5)),
                rng.gen_range(-90.0..90.0),
                rng.gen_range(-90.0..90.0),
                rng.gen_range(-90.0..90.0),
            ]
        })
        .collect();
    ImageRGB::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut px = [128.0f64; 3];
        for w in &waves {
            let (dir_x, dir_y) = (w[2].cos(), w[2].sin());
            px[w[0] as usize] += w[4] * (w[1] * (xf * dir_x + yf * dir_y) + w[3]).sin();
        }
        for b in &blobs {
            let g = (-((xf - b[0]).powi(2) + (yf - b[1]).powi(2)) / (2.0 * b[2] * b[2])).exp();
            for c in 0..3 {
                px[c] += b[3 + c] * g;
            }
        }
        px.map(|v| v.round().clamp(0.0, 255.0) as u8)
    })
    .expect("synthetic image size must be at least 8x8")
}

/// Uniform i.i.d. pixel noise.
pub fn noise_image(width: usize, height: usize, seed: u64) -> ImageRGB {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..width * height * 3).map(|_| rng.gen()).collect();
    ImageRGB::new(width, height, pixels).expect("synthetic image size must be at least 8x8")
}

/// A rotation benchmark: `n_base` square originals form the database; each
/// one's 90°, 180° and 270° quarter turns are queries whose single relevant
/// item is the original.
pub struct RotationBenchmark {
    pub manifest: DatasetManifest,
    /// `(id, image)` for every manifest entry, in manifest order.
    pub images: Vec<(String, ImageRGB)>,
}

pub fn rotation_benchmark(n_base: usize, side: usize, seed: u64) -> RotationBenchmark {
    let mut images = Vec::new();
    let mut manifest_images = Vec::new();
    let mut ground_truth = std::collections::BTreeMap::new();
    for i in 0..n_base {
        let base_id = format!("img{i:03}");
        let base = smooth_image(side, side, seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        for quarter in 1..=3 {
            let qid = format!("{base_id}_rot{}", quarter * 90);
            let rotated = rotate_with_padding(&base, quarter as f64 * 90.0, IMAGENET_MEAN_RGB);
            manifest_images.push(ManifestImage { id: qid.clone(), path: format!("{qid}.png"), role: Role::Query });
            ground_truth.insert(qid.clone(), GroundTruth { relevant: vec![base_id.clone()], junk: vec![] });
            images.push((qid, rotated));
        }
        manifest_images.push(ManifestImage {
            id: base_id.clone(),
            path: format!("{base_id}.png"),
            role: Role::Database,
        });
        images.push((base_id, base));
    }
    let manifest = DatasetManifest { protocol: Protocol::Standard, images: manifest_images, ground_truth };
    RotationBenchmark { manifest, images }
}
