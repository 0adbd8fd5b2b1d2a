//! Mask-aware local descriptors: dense opponent SIFT, color names, riu2 LBP.

mod colornames;
mod lbp;
mod sift;

pub use colornames::{color_name_items, color_names, ColorNameHistogram, ColorNameTable, COLOR_NAMES, N_COLOR_NAMES};
pub use lbp::{lbp_hist, lbp_items, riu2_class, LbpHistogram, LBP_BINS, LBP_SCALES};
pub use sift::{dense_sift, grid_count, opponent_sift, DescriptorSet, OPPONENT_SIFT_DIM, SIFT_DIM};
