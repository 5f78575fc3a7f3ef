#![allow(dead_code)]

use orbitpool::{generate_orbit_images, FeatureOrbitTensor, ImageRGB, OrbitSpec, ToyExtractor, ToyExtractorConfig};

pub const SIDE: usize = 32;

/// Small enough for a single core: 32×32 input, two stages, 7×7 output.
pub fn toy() -> ToyExtractor {
    ToyExtractor::new(ToyExtractorConfig { seed: 17, n_stages: 2, channels_out: 8, kernel_size: 3, out_spatial: 7 })
        .unwrap()
}

pub fn rotation_orbit() -> OrbitSpec {
    OrbitSpec { scale_enabled: false, target_size: (SIDE, SIDE), ..OrbitSpec::default() }
}

pub fn rotation_scale_orbit(scale_steps: usize) -> OrbitSpec {
    OrbitSpec { scale_steps, target_size: (SIDE, SIDE), ..OrbitSpec::default() }
}

pub fn identity_orbit() -> OrbitSpec {
    OrbitSpec::identity((SIDE, SIDE))
}

pub fn orbit_tensor(extractor: &ToyExtractor, img: &ImageRGB, spec: &OrbitSpec) -> FeatureOrbitTensor {
    let images = generate_orbit_images(img, spec).unwrap();
    extractor
        .extract_orbit(&images, spec.n_rot(), spec.n_scale())
        .unwrap()
        .with_axes(orbitpool::AxisPresence { rotation: spec.rotation_enabled, scale: spec.scale_enabled })
}
