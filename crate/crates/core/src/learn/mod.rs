//! One-vs-all linear SVMs.

mod dcd;
mod ova;

pub use dcd::{primal_objective, train_binary, BinarySvm, SvmParams};
pub use ova::{predict, train_ova, ClassModel, Prediction, SvmModel};
