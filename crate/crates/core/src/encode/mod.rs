//! Vocabularies, bag-of-words pooling, kernel map and feature assembly.

mod bow;
mod feature;
mod hkm;
mod kmeans;

pub use bow::{pyramid_pool, quantize, PyramidSpec};
pub use feature::{assemble_feature, Block, FeatureSchema, FeatureVector, LayoutEntry};
pub use hkm::{chi2_signature, hkm_expand, hkm_expand_into, target_kernel, KernelMapSpec, KernelWindow};
pub use kmeans::{kmeans, KMeansOutcome, Vocabulary};
