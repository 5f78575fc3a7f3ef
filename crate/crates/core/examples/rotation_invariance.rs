//! A quarter-turned image has the same descriptor once rotation is pooled.

use orbitpool::orbit::IMAGENET_MEAN_RGB;
use orbitpool::synthetic::smooth_image;
use orbitpool::{
    generate_orbit_images, pairwise_distance_report, rotate_with_padding, OrbitSpec, PoolingSequence, ToyExtractor,
    ToyExtractorConfig,
};

fn main() -> orbitpool::Result<()> {
    let extractor = ToyExtractor::new(ToyExtractorConfig { n_stages: 2, channels_out: 16, ..Default::default() })?;
    let side = extractor.config().min_side();
    let spec = OrbitSpec { scale_steps: 3, target_size: (side, side), ..OrbitSpec::default() };

    let x = smooth_image(side, side, 21);
    let x90 = rotate_with_padding(&x, 90.0, IMAGENET_MEAN_RGB);
    let orbit_of = |img| -> orbitpool::Result<_> {
        extractor.extract_orbit(&generate_orbit_images(img, &spec)?, spec.n_rot(), spec.n_scale())
    };
    let (a, b) = (orbit_of(&x)?, orbit_of(&x90)?);

    let sequences: Vec<PoolingSequence> = ["", "A:scale", "A:scale,A:trans", "A:scale,A:trans,A:rot", "M:rot"]
        .iter()
        .map(|s| s.parse())
        .collect::<orbitpool::Result<_>>()?;
    for row in pairwise_distance_report("x|rot90(x)", (&a, &b), &sequences)? {
        println!("{:>24}  {:.6}", row.sequence, row.distance);
    }
    Ok(())
}
