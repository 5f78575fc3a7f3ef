//! Descriptors, L2 normalization, Euclidean and Hamming distances.

use orbitpool::{euclidean_distance, hamming_distance, l2_normalize, BinaryHash, Descriptor};

fn main() -> orbitpool::Result<()> {
    let a = Descriptor::new(vec![3.0, 4.0], "demo");
    let b = Descriptor::new(vec![0.0, 2.0], "demo");
    let (na, nb) = (l2_normalize(&a), l2_normalize(&b));
    println!("a = {:?}, |a| = {}", na.values(), na.norm());
    println!("b = {:?}, |b| = {}", nb.values(), nb.norm());
    println!("d(a, b) = {:.6}", euclidean_distance(&na, &nb)?);

    let zero = l2_normalize(&Descriptor::new(vec![0.0; 4], "demo"));
    println!("zero vector stays zero, normalized = {}", zero.is_normalized());

    let h1 = BinaryHash::from_bits([true, false, true, true, false]);
    let h2 = BinaryHash::from_bits([true, true, false, true, false]);
    println!("hamming({:02x?}, {:02x?}) = {}", h1.to_bytes(), h2.to_bytes(), hamming_distance(&h1, &h2)?);

    let long = BinaryHash::zeros(512);
    match hamming_distance(&h1, &long) {
        Err(e) => println!("mismatched lengths: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
