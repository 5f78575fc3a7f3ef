//! Rotation and scale orbit of one image, written as PNGs.
//!
//! ```text
//! cargo run --release --example orbit_images -- [input.png] [out_dir]
//! ```

use orbitpool::synthetic::smooth_image;
use orbitpool::{generate_orbit_images, ImageRGB, OrbitSpec};

fn main() -> orbitpool::Result<()> {
    let mut args = std::env::args().skip(1);
    let img = match args.next() {
        Some(path) => ImageRGB::open(path)?,
        None => smooth_image(160, 120, 1),
    };
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "orbit_images".into()));
    std::fs::create_dir_all(&out)?;

    let spec = OrbitSpec { rotation_steps: 8, rotation_step_degrees: 45.0, scale_steps: 3, ..OrbitSpec::default() };
    let orbit = generate_orbit_images(&img, &spec)?;
    println!("{}×{} input, {} orbit images of {:?}", img.width(), img.height(), orbit.len(), spec.target_size);
    for k in 0..spec.n_scale() {
        println!("  scale {k}: crop side fraction {:.4}", spec.scale_fraction(k));
    }
    for (i, o) in orbit.iter().enumerate() {
        let (r, s) = (i / spec.n_scale(), i % spec.n_scale());
        o.save_png(out.join(format!("r{r:02}_s{s}.png")))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
