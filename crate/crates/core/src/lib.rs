//! Fine-grained dog breed classification: GrabCut foreground extraction,
//! Hough-circle head detection, multi-feature bag-of-words with spatial
//! pyramids, homogeneous kernel maps, and one-vs-all linear SVMs.

pub mod descript;
pub mod encode;
pub mod error;
pub mod evalrep;
pub mod imgio;
pub mod learn;
pub mod pipeline;
pub mod headdet;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
