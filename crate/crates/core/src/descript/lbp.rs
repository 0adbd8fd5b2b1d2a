//! Rotation-invariant uniform LBP (riu2), P = 8 on a circle of radius s.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::imgio::GrayPlane;
use crate::segment::Mask;

pub const LBP_BINS: usize = 10;
pub const LBP_SCALES: [usize; 3] = [1, 2, 4];

#[derive(Clone, Debug, PartialEq)]
pub struct LbpHistogram {
    pub scale: usize,
    pub bins: [f64; LBP_BINS],
}

/// riu2 class of an 8-bit circular pattern: popcount when it has at most two
/// 0/1 transitions, else 9.
pub fn riu2_class(pattern: u8) -> usize {
    let transitions = (pattern ^ pattern.rotate_left(1)).count_ones();
    if transitions <= 2 {
        pattern.count_ones() as usize
    } else {
        LBP_BINS - 1
    }
}

/// Neighbor value minus center value at a diagonal offset of `d` along both
/// axes in directions (sx, sy). Written so that swapping the two axes gives
/// bit-identical results.
#[inline]
fn diagonal_diff(plane: &GrayPlane, x: usize, y: usize, d: f64, sx: isize, sy: isize) -> f64 {
    let c = plane.get(x, y);
    let n = d.floor();
    let f = d - n;
    let n = n as isize;
    let at = |ox: isize, oy: isize| plane.get((x as isize + sx * ox) as usize, (y as isize + sy * oy) as usize) - c;
    let nn = at(n, n);
    if f == 0.0 {
        return nn;
    }
    let (fnn, nf, ff) = (at(n + 1, n), at(n, n + 1), at(n + 1, n + 1));
    nn + f * ((fnn - nn) + (nf - nn)) + f * f * ((ff + nn) - (fnn + nf))
}

fn pattern_at(plane: &GrayPlane, x: usize, y: usize, s: usize) -> u8 {
    let c = plane.get(x, y);
    let si = s as isize;
    let d = s as f64 * FRAC_1_SQRT_2;
    let axis = |dx: isize, dy: isize| plane.get((x as isize + dx) as usize, (y as isize + dy) as usize) - c;
    // counter-clockwise from +x (image y points down)
    let diffs = [
        axis(si, 0),
        diagonal_diff(plane, x, y, d, 1, -1),
        axis(0, -si),
        diagonal_diff(plane, x, y, d, -1, -1),
        axis(-si, 0),
        diagonal_diff(plane, x, y, d, -1, 1),
        axis(0, si),
        diagonal_diff(plane, x, y, d, 1, 1),
    ];
    diffs
        .iter()
        .enumerate()
        .fold(0u8, |acc, (p, &diff)| if diff >= 0.0 { acc | (1 << p) } else { acc })
}

fn check(gray: &GrayPlane, scale: usize, mask: Option<&Mask>) -> Result<()> {
    if !LBP_SCALES.contains(&scale) {
        return Err(Error::arg(format!("LBP scale {scale} not in {{1, 2, 4}}")));
    }
    let min = 2 * scale + 1;
    if gray.width() <= min || gray.height() <= min {
        return Err(Error::arg(format!(
            "LBP at scale {scale} needs more than {min} pixels per side, got {}x{}",
            gray.width(),
            gray.height()
        )));
    }
    if let Some(m) = mask {
        if m.width() != gray.width() || m.height() != gray.height() {
            return Err(Error::arg("mask dimensions do not match the plane"));
        }
    }
    Ok(())
}

/// (x, y, riu2 class) for every interior pixel (FG centers only when masked).
pub fn lbp_items(gray: &GrayPlane, scale: usize, mask: Option<&Mask>) -> Result<Vec<(u32, u32, usize)>> {
    check(gray, scale, mask)?;
    let (w, h) = (gray.width(), gray.height());
    let mut items = Vec::with_capacity((w - 2 * scale) * (h - 2 * scale));
    for y in scale..h - scale {
        for x in scale..w - scale {
            if mask.is_some_and(|m| !m.is_fg(x, y)) {
                continue;
            }
            items.push((x as u32, y as u32, riu2_class(pattern_at(gray, x, y, scale))));
        }
    }
    Ok(items)
}

pub fn lbp_hist(gray: &GrayPlane, scale: usize, mask: Option<&Mask>) -> Result<LbpHistogram> {
    let items = lbp_items(gray, scale, mask)?;
    let mut bins = [0.0; LBP_BINS];
    for &(_, _, c) in &items {
        bins[c] += 1.0;
    }
    if !items.is_empty() {
        let n = items.len() as f64;
        bins.iter_mut().for_each(|b| *b /= n);
    }
    Ok(LbpHistogram { scale, bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rotate90(p: &GrayPlane) -> GrayPlane {
        let (w, h) = (p.width(), p.height());
        // (x, y) -> (h - 1 - y, x)
        GrayPlane::from_fn(h, w, |nx, ny| p.get(ny, h - 1 - nx))
    }

    fn noise_plane(w: usize, h: usize, seed: u64) -> GrayPlane {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let vals: Vec<f64> = (0..w * h)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) % 256) as f64
            })
            .collect();
        GrayPlane::new(w, h, vals).unwrap()
    }

    #[test]
    fn riu2_classes() {
        assert_eq!(riu2_class(0), 0);
        assert_eq!(riu2_class(0xFF), 8);
        assert_eq!(riu2_class(0b0000_0111), 3);
        assert_eq!(riu2_class(0b1000_0011), 3);
        assert_eq!(riu2_class(0b0101_0000), 9);
    }

    #[test]
    fn constant_plane_is_all_ones() {
        for s in LBP_SCALES {
            let h = lbp_hist(&GrayPlane::from_fn(20, 20, |_, _| 93.5), s, None).unwrap();
            assert_eq!(h.bins[8], 1.0);
            assert_eq!(h.bins.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn rotation_by_90_degrees_is_exact() {
        for (seed, s) in [(1, 1), (2, 2), (3, 4), (4, 1)] {
            let p = noise_plane(23, 23, seed);
            let a = lbp_hist(&p, s, None).unwrap();
            let b = lbp_hist(&rotate90(&p), s, None).unwrap();
            assert_eq!(a.bins, b.bins, "scale {s}");
        }
    }

    /// Naive per-pixel evaluation: explicit bilinear weights at each
    /// neighbor position, no shared arithmetic with the implementation.
    fn oracle_hist(p: &GrayPlane, s: usize) -> [f64; LBP_BINS] {
        let mut bins = [0.0; LBP_BINS];
        let mut count = 0.0;
        for y in s..p.height() - s {
            for x in s..p.width() - s {
                let c = p.get(x, y);
                let mut bits = [false; 8];
                for (k, bit) in bits.iter_mut().enumerate() {
                    let a = k as f64 * std::f64::consts::FRAC_PI_4;
                    let px = x as f64 + s as f64 * a.cos();
                    let py = y as f64 - s as f64 * a.sin();
                    let (px, py) = ((px * 1e9).round() / 1e9, (py * 1e9).round() / 1e9);
                    let (x0, y0) = (px.floor(), py.floor());
                    let (fx, fy) = (px - x0, py - y0);
                    let g = |xx: f64, yy: f64| p.get(xx as usize, yy as usize);
                    let mut v = (1.0 - fx) * (1.0 - fy) * g(x0, y0);
                    if fx > 0.0 {
                        v += fx * (1.0 - fy) * g(x0 + 1.0, y0);
                    }
                    if fy > 0.0 {
                        v += (1.0 - fx) * fy * g(x0, y0 + 1.0);
                    }
                    if fx > 0.0 && fy > 0.0 {
                        v += fx * fy * g(x0 + 1.0, y0 + 1.0);
                    }
                    *bit = v >= c - 1e-9;
                }
                let ones = bits.iter().filter(|&&b| b).count();
                let transitions = (0..8).filter(|&k| bits[k] != bits[(k + 1) % 8]).count();
                bins[if transitions <= 2 { ones } else { 9 }] += 1.0;
                count += 1.0;
            }
        }
        bins.map(|b| b / count)
    }

    #[test]
    fn vertical_stripes_match_oracle() {
        let stripes = GrayPlane::from_fn(12, 12, |x, _| if x % 2 == 0 { 0.0 } else { 255.0 });
        let got = lbp_hist(&stripes, 1, None).unwrap();
        let want = oracle_hist(&stripes, 1);
        for k in 0..LBP_BINS {
            assert!((got.bins[k] - want[k]).abs() < 1e-12, "bin {k}: {} vs {}", got.bins[k], want[k]);
        }
        // dark columns see only brighter-or-equal neighbors; bright columns
        // see two equal vertical neighbors among darker ones
        assert_eq!(got.bins[8] + got.bins[9], 1.0);
        assert!((got.bins[8] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noise_matches_oracle() {
        let p = noise_plane(17, 15, 9);
        for s in LBP_SCALES {
            let got = lbp_hist(&p, s, None).unwrap();
            let want = oracle_hist(&p, s);
            for k in 0..LBP_BINS {
                assert!((got.bins[k] - want[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_small_or_bad_scale() {
        let p = GrayPlane::from_fn(5, 5, |_, _| 0.0);
        assert!(lbp_hist(&p, 2, None).is_err());
        assert!(lbp_hist(&p, 3, None).is_err());
        assert!(lbp_hist(&p, 1, None).is_ok());
    }

    proptest! {
        #[test]
        fn invariant_to_constant_offset(seed in 0u64..1000, offset in -100i32..100, s in prop::sample::select(LBP_SCALES.to_vec())) {
            let p = noise_plane(14, 13, seed);
            let q = p.map(|v| v + offset as f64);
            prop_assert_eq!(lbp_hist(&p, s, None).unwrap(), lbp_hist(&q, s, None).unwrap());
        }
    }
}
