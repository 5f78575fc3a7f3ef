//! mAP on a synthetic benchmark whose queries are quarter turns of the
//! database images.
//!
//! ```text
//! cargo run --release --example rotation_benchmark -- [n_base]
//! ```

use std::collections::BTreeMap;

use orbitpool::retrieval::rank_all;
use orbitpool::synthetic::rotation_benchmark;
use orbitpool::{
    apply_sequence, generate_orbit_images, mean_average_precision, Descriptor, OrbitSpec, PoolingSequence, Query,
    SearchIndex, ToyExtractor, ToyExtractorConfig,
};

fn main() -> orbitpool::Result<()> {
    let n_base = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let extractor = ToyExtractor::new(ToyExtractorConfig { n_stages: 2, channels_out: 8, ..Default::default() })?;
    let side = extractor.config().min_side();
    let bench = rotation_benchmark(n_base, side, 7);
    println!("{} database images, {} queries", n_base, bench.manifest.query_ids().count());

    let runs = [
        (OrbitSpec::identity((side, side)), vec!["", "A:trans"]),
        (OrbitSpec { scale_enabled: false, target_size: (side, side), ..OrbitSpec::default() }, vec!["M:rot", "A:rot"]),
        (
            OrbitSpec { scale_steps: 3, target_size: (side, side), ..OrbitSpec::default() },
            vec!["A:scale,S:trans,M:rot"],
        ),
    ];
    for (spec, sequences) in runs {
        let tensors = bench
            .images
            .iter()
            .map(|(id, img)| {
                let orbit = generate_orbit_images(img, &spec)?;
                Ok((id.clone(), extractor.extract_orbit(&orbit, spec.n_rot(), spec.n_scale())?))
            })
            .collect::<orbitpool::Result<BTreeMap<_, _>>>()?;
        for s in sequences {
            let seq: PoolingSequence = s.parse()?;
            let descriptors = tensors
                .iter()
                .map(|(id, t)| Ok((id.clone(), apply_sequence(t, &seq)?)))
                .collect::<orbitpool::Result<BTreeMap<String, Descriptor>>>()?;
            let db = bench.manifest.database_images().map(|i| (i.id.clone(), descriptors[&i.id].clone())).collect();
            let index = SearchIndex::float(db)?;
            let lists = rank_all(&bench.manifest, &index, |q| descriptors.get(q).map(Query::Float))?;
            let label = if seq.is_empty() { "raw".into() } else { seq.to_string() };
            println!("{label:>24}  mAP {:.4}", mean_average_precision(&lists, &bench.manifest)?);
        }
    }
    Ok(())
}
