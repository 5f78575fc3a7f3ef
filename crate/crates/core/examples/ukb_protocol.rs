//! 4×Recall@4 on groups of four, where every image is a query and the
//! self-match counts.

use std::collections::BTreeMap;

use orbitpool::retrieval::{rank_all, GroundTruth, ManifestImage};
use orbitpool::{recall4_times4, DatasetManifest, Descriptor, Protocol, Query, Role, SearchIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> orbitpool::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut images = Vec::new();
    let mut ground_truth = BTreeMap::new();
    let mut descriptors = BTreeMap::new();
    for g in 0..25 {
        let center: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let group: Vec<String> = (0..4).map(|k| format!("{:05}", 4 * g + k)).collect();
        for id in &group {
            images.push(ManifestImage { id: id.clone(), path: format!("{id}.jpg"), role: Role::Both });
            ground_truth.insert(id.clone(), GroundTruth { relevant: group.clone(), junk: vec![] });
            let v = center.iter().map(|c| c + rng.gen_range(-0.6..0.6)).collect();
            descriptors.insert(id.clone(), Descriptor::new(v, "demo"));
        }
    }
    let manifest = DatasetManifest { protocol: Protocol::Ukb, images, ground_truth };
    manifest.validate()?;

    let index = SearchIndex::float(descriptors.iter().map(|(k, v)| (k.clone(), v.clone())).collect())?;
    let lists = rank_all(&manifest, &index, |q| descriptors.get(q).map(Query::Float))?;
    println!("first result of {} is {}", lists[0].query_id, lists[0].entries[0].id);
    println!("4×Recall@4 = {:.3} (max 4)", recall4_times4(&lists, &manifest)?);
    Ok(())
}
