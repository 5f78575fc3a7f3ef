//! Seeded toy extractor over an orbit, stored as a FOT1 file.

use orbitpool::synthetic::smooth_image;
use orbitpool::{
    generate_orbit_images, read_feature_file, write_feature_file, OrbitSpec, ToyExtractor, ToyExtractorConfig,
};

fn main() -> orbitpool::Result<()> {
    let cfg = ToyExtractorConfig { n_stages: 2, channels_out: 16, ..ToyExtractorConfig::default() };
    let extractor = ToyExtractor::new(cfg)?;
    let side = extractor.config().min_side();
    let img = smooth_image(side, side, 3);

    let map = extractor.extract(&img)?;
    println!("single image: {}×{}×{}", map.channels(), map.height(), map.width());

    let spec = OrbitSpec { scale_steps: 2, target_size: (side, side), ..OrbitSpec::default() };
    let orbit = generate_orbit_images(&img, &spec)?;
    let tensor = extractor.extract_orbit(&orbit, spec.n_rot(), spec.n_scale())?;
    println!("orbit tensor: {}", tensor.shape());

    let dir = std::env::temp_dir().join("orbitpool-example");
    let path = dir.join("image.fot");
    write_feature_file(&tensor, &path)?;
    let back = read_feature_file(&path)?;
    println!("{} bytes written, round-trip equal: {}", std::fs::metadata(&path)?.len(), back == tensor);
    Ok(())
}
