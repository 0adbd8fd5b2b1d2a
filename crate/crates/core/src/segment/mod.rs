//! Bounding-box seeded foreground extraction (GrabCut).

mod gmm;
mod grabcut;
mod maxflow;

pub use gmm::{fit_gmm, Gaussian, Gmm, COVARIANCE_EPSILON};
pub use grabcut::{build_network, grabcut, BetaMode, GrabCutParams, Segmentation};
pub use maxflow::{max_flow, FlowNetwork};

use crate::error::{Error, Result};
use crate::imgio::{parse_netpbm, encode_pgm, BBox};

/// Per-pixel foreground labeling with hardness flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    fg: Vec<bool>,
    hard: Vec<bool>,
}

impl Mask {
    /// Initial GrabCut labeling: inside the box soft FG, outside hard BG.
    pub fn from_seed_box(width: usize, height: usize, seed: BBox) -> Self {
        let mut fg = vec![false; width * height];
        let mut hard = vec![true; width * height];
        for y in seed.y..seed.y + seed.h {
            for x in seed.x..seed.x + seed.w {
                fg[y * width + x] = true;
                hard[y * width + x] = false;
            }
        }
        Mask { width, height, fg, hard }
    }

    /// Every pixel soft FG.
    pub fn all_foreground(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            fg: vec![true; width * height],
            hard: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_fg(&self, x: usize, y: usize) -> bool {
        self.fg[y * self.width + x]
    }

    #[inline]
    pub fn is_hard(&self, x: usize, y: usize) -> bool {
        self.hard[y * self.width + x]
    }

    pub fn labels(&self) -> &[bool] {
        &self.fg
    }

    pub(crate) fn hardness(&self) -> &[bool] {
        &self.hard
    }

    pub(crate) fn set_soft_labels(&mut self, fg: &[bool]) -> usize {
        let mut changed = 0;
        for i in 0..self.fg.len() {
            if !self.hard[i] && self.fg[i] != fg[i] {
                self.fg[i] = fg[i];
                changed += 1;
            }
        }
        changed
    }

    pub fn fg_count(&self) -> usize {
        self.fg.iter().filter(|&&f| f).count()
    }

    pub fn crop(&self, bbox: BBox) -> Result<Mask> {
        bbox.check(self.width, self.height)?;
        let mut fg = Vec::with_capacity(bbox.area());
        let mut hard = Vec::with_capacity(bbox.area());
        for y in bbox.y..bbox.y + bbox.h {
            let row = y * self.width;
            fg.extend_from_slice(&self.fg[row + bbox.x..row + bbox.x + bbox.w]);
            hard.extend_from_slice(&self.hard[row + bbox.x..row + bbox.x + bbox.w]);
        }
        Ok(Mask {
            width: bbox.w,
            height: bbox.h,
            fg,
            hard,
        })
    }

    /// P5 encoding, 255 = FG. Hardness is not stored.
    pub fn to_pgm(&self) -> Vec<u8> {
        let values: Vec<u8> = self.fg.iter().map(|&f| if f { 255 } else { 0 }).collect();
        encode_pgm(self.width, self.height, &values)
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Mask> {
        let (width, height, values) = parse_netpbm(bytes, b"P5", 1)?;
        let fg: Vec<bool> = values.iter().map(|&v| v >= 128).collect();
        if values.iter().any(|&v| v != 0 && v != 255) {
            return Err(Error::Format("mask values must be 0 or 255".into()));
        }
        Ok(Mask {
            width,
            height,
            hard: vec![false; fg.len()],
            fg,
        })
    }
}
