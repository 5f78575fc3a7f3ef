//! Binarizing descriptors at the database mean and storing a BHI1 index.

use orbitpool::{binarize, fit_thresholds, hamming_distance, Descriptor, HashIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> orbitpool::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let database: Vec<Descriptor> =
        (0..20).map(|_| Descriptor::new((0..64).map(|_| rng.gen_range(0.0f32..1.0)).collect(), "demo")).collect();
    let thresholds = fit_thresholds(&database, "demo#database")?;

    let mut index = HashIndex::new(thresholds.dims());
    for (i, d) in database.iter().enumerate() {
        index.push(format!("db{i:02}"), binarize(d, &thresholds)?)?;
    }
    println!("{} hashes of {} bits, {} bytes on disk", index.len(), index.n_bits(), index.encode().len());

    let noisy =
        Descriptor::new(database[7].values().iter().map(|v| v + rng.gen_range(-0.05f32..0.05)).collect(), "demo");
    let q = binarize(&noisy, &thresholds)?;
    let mut ranked: Vec<(u32, &str)> = index
        .entries()
        .iter()
        .map(|(id, h)| Ok((hamming_distance(&q, h)?, id.as_str())))
        .collect::<orbitpool::Result<_>>()?;
    ranked.sort();
    for (d, id) in ranked.iter().take(3) {
        println!("  {id}  hamming {d}");
    }

    let path = std::env::temp_dir().join("orbitpool-example").join("demo.bhi");
    index.write(&path)?;
    println!("round-trip equal: {}", HashIndex::read(&path)? == index);
    Ok(())
}
