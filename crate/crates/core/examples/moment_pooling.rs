//! Chained moment pooling: output sizes, and why the order matters.

use orbitpool::pooling::output_dims;
use orbitpool::{apply_sequence, AxisPresence, FeatureOrbitTensor, OrbitShape, PoolingSequence};

fn main() -> orbitpool::Result<()> {
    let single = OrbitShape::new(1, 1, 512, 7, 7);
    let rot_only = OrbitShape::new(36, 1, 512, 7, 7);
    let scale_only = OrbitShape::new(1, 10, 512, 7, 7);
    let full = OrbitShape::new(36, 10, 512, 7, 7);
    let rows = [
        ("", single),
        ("A:trans", single),
        ("A:rot", rot_only),
        ("A:scale", scale_only),
        ("A:scale,A:trans", full),
        ("A:scale,S:trans,M:rot", full),
    ];
    for (s, shape) in rows {
        let seq: PoolingSequence = s.parse()?;
        let label = if seq.is_empty() { "raw".to_string() } else { seq.to_string() };
        println!("{label:>24} on {:<18} {:>6} dims", shape.to_string(), output_dims(shape, &seq));
    }

    // rotation along rows, scale along columns
    let t = FeatureOrbitTensor::new(vec![0.0, 1.0, 1.0, 0.0], OrbitShape::new(2, 2, 1, 1, 1), AxisPresence::ALL)?;
    for s in ["A:rot,M:scale", "M:rot,A:scale", "S:rot,A:scale", "A:rot,A:scale", "A:scale,A:rot"] {
        let d = apply_sequence(&t, &s.parse()?)?;
        println!("{s:>16} on [[0,1],[1,0]] -> {}", d.values()[0]);
    }
    Ok(())
}
