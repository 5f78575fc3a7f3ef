//! Transformation-invariant global image descriptors.
//!
//! An image is expanded into its orbit under rotations and center-crop
//! scalings, every orbit element goes through a convolutional feature
//! extractor, and the resulting `(rotation, scale, channel, row, col)` stack
//! is reduced by chained moment pooling (average, max, standard deviation)
//! over the rotation, scale and translation axes. Descriptors can be
//! binarized at the database mean into compact hashes and evaluated for
//! instance retrieval with mAP and 4×Recall@4.
//!
//! ```
//! use orbitpool::{apply_sequence, AxisPresence, FeatureOrbitTensor, OrbitShape, PoolingSequence};
//!
//! let shape = OrbitShape::new(36, 10, 512, 7, 7);
//! let tensor = FeatureOrbitTensor::new(vec![0.5; shape.len()], shape, AxisPresence::ALL)?;
//! let seq: PoolingSequence = "A:scale,S:trans,M:rot".parse()?;
//! assert_eq!(apply_sequence(&tensor, &seq)?.dims(), 512);
//! # Ok::<(), orbitpool::Error>(())
//! ```
//!
//! The `examples/` directory has one runnable program per capability.

mod error;
pub mod extractor;
pub mod hashing;
pub mod io;
pub mod orbit;
pub mod pipeline;
pub mod pooling;
pub mod retrieval;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use extractor::{
    assemble_orbit_tensor, read_feature_file, toy_extract, write_feature_file, FeatureMap, ToyExtractor,
    ToyExtractorConfig,
};
pub use hashing::{binarize, fit_thresholds, HashIndex, ThresholdVector};
pub use orbit::{center_crop_geometric, generate_orbit_images, rotate_with_padding, ImageRGB, OrbitSpec};
pub use pooling::{apply_sequence, moment_reduce, pool_axis, Axis, Moment, PoolStep, PoolingSequence};
pub use retrieval::{
    average_precision, mean_average_precision, pairwise_distance_report, rank, recall4_times4, DatasetManifest,
    Protocol, Query, RankedList, Role, SearchIndex,
};
pub use types::{
    euclidean_distance, hamming_distance, l2_normalize, AxisPresence, BinaryHash, Descriptor, FeatureOrbitTensor,
    OrbitShape,
};
