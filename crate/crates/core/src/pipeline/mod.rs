//! Staged, cached batch pipeline from manifest to report.

mod config;
mod extract;
mod manifest;
mod stages;

pub use config::{BboxPolicy, PipelineConfig};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use stages::{feature_rows, feature_table, FeatureTable, Pipeline, Stage, StageSummary};
