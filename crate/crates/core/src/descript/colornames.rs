//! Eleven basic color terms via a quantized RGB lookup table.
//!
//! Table file: magic `CN11` followed by 32768 bin indices, one per 8×8×8
//! RGB cell, r-major then g then b.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imgio::Image;
use crate::segment::Mask;

pub const COLOR_NAMES: [&str; 11] = [
    "black", "blue", "brown", "grey", "green", "orange", "pink", "purple", "red", "white", "yellow",
];
pub const N_COLOR_NAMES: usize = 11;

const MAGIC: &[u8; 4] = b"CN11";
const CELLS: usize = 32 * 32 * 32;

static BUILTIN: &[u8] = include_bytes!("../../data/color_names.cn11");

/// Anchor sRGB color per name, used to generate the shipped table.
const ANCHORS: [[u8; 3]; 11] = [
    [0, 0, 0],
    [0, 0, 255],
    [139, 69, 19],
    [128, 128, 128],
    [0, 160, 0],
    [255, 140, 0],
    [255, 170, 200],
    [128, 0, 128],
    [220, 0, 0],
    [255, 255, 255],
    [255, 255, 0],
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorNameTable {
    bins: Vec<u8>,
}

impl ColorNameTable {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != MAGIC.len() + CELLS || &bytes[..4] != MAGIC {
            return Err(Error::Config(format!(
                "color-name table must be `CN11` + {CELLS} bytes, got {} bytes",
                bytes.len()
            )));
        }
        let bins = bytes[4..].to_vec();
        if let Some(bad) = bins.iter().position(|&b| b as usize >= N_COLOR_NAMES) {
            return Err(Error::Config(format!("color-name table cell {bad} has bin {}", bins[bad])));
        }
        Ok(ColorNameTable { bins })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("color-name table {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_bytes(BUILTIN).expect("shipped table is valid")
    }

    /// Nearest-anchor assignment in CIELAB at each cell center.
    pub fn generate() -> Self {
        let anchors: Vec<[f64; 3]> = ANCHORS.iter().map(|&c| srgb_to_lab(c.map(|v| v as f64))).collect();
        let mut bins = Vec::with_capacity(CELLS);
        for r in 0..32 {
            for g in 0..32 {
                for b in 0..32 {
                    let center = [r, g, b].map(|c: usize| (c * 8 + 4) as f64);
                    let lab = srgb_to_lab(center);
                    let mut best = (0, f64::INFINITY);
                    for (i, a) in anchors.iter().enumerate() {
                        let d = (0..3).map(|k| (lab[k] - a[k]).powi(2)).sum::<f64>();
                        if d < best.1 {
                            best = (i, d);
                        }
                    }
                    bins.push(best.0 as u8);
                }
            }
        }
        ColorNameTable { bins }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&self.bins);
        out
    }

    #[inline]
    pub fn lookup(&self, rgb: [u8; 3]) -> usize {
        let idx = (rgb[0] as usize >> 3) * 1024 + (rgb[1] as usize >> 3) * 32 + (rgb[2] as usize >> 3);
        self.bins[idx] as usize
    }
}

fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| {
        let c = c / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
    let y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
    let z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorNameHistogram {
    pub bins: [f64; N_COLOR_NAMES],
}

/// (x, y, color-name bin) for every counted pixel.
pub fn color_name_items(img: &Image, mask: Option<&Mask>, table: &ColorNameTable) -> Result<Vec<(u32, u32, usize)>> {
    if let Some(m) = mask {
        if m.width() != img.width() || m.height() != img.height() {
            return Err(Error::arg("mask dimensions do not match the image"));
        }
    }
    let mut items = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.is_none_or(|m| m.is_fg(x, y)) {
                items.push((x as u32, y as u32, table.lookup(img.pixel(x, y))));
            }
        }
    }
    Ok(items)
}

/// L1-normalized color-name histogram; all zeros when no pixel is counted.
pub fn color_names(img: &Image, mask: Option<&Mask>, table: &ColorNameTable) -> Result<ColorNameHistogram> {
    let items = color_name_items(img, mask, table)?;
    let mut bins = [0.0; N_COLOR_NAMES];
    for &(_, _, b) in &items {
        bins[b] += 1.0;
    }
    if !items.is_empty() {
        let n = items.len() as f64;
        bins.iter_mut().for_each(|v| *v /= n);
    }
    Ok(ColorNameHistogram { bins })
}


#[cfg(test)]
mod regen {
    #[test]
    #[ignore]
    fn write_shipped_table() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/color_names.cn11");
        std::fs::write(path, super::ColorNameTable::generate().to_bytes()).unwrap();
    }
}
