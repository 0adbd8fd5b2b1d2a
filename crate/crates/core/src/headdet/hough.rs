//! Sobel gradients and gradient-direction Hough voting for circles.

use crate::error::{Error, Result};
use crate::imgio::GrayPlane;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    /// Fraction of the expected edge support found, in (0, 1].
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub gx: GrayPlane,
    pub gy: GrayPlane,
    pub magnitude: GrayPlane,
}

/// 3×3 Sobel responses; the one-pixel border is zero.
pub fn gradients(gray: &GrayPlane) -> Result<Gradients> {
    let (w, h) = (gray.width(), gray.height());
    if w < 3 || h < 3 {
        return Err(Error::arg(format!("gradients need at least 3x3 pixels, got {w}x{h}")));
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: isize, dy: isize| gray.get((x as isize + dx) as usize, (y as isize + dy) as usize);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y * w + x;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = sx.hypot(sy);
        }
    }
    Ok(Gradients {
        gx: GrayPlane::new(w, h, gx)?,
        gy: GrayPlane::new(w, h, gy)?,
        magnitude: GrayPlane::new(w, h, mag)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughParams {
    pub r_min: usize,
    pub r_max: usize,
    /// Minimum Sobel magnitude for a pixel to vote.
    pub mag_threshold: f64,
    /// Peaks must reach this fraction of the strongest score.
    pub peak_threshold: f64,
    /// Absolute score floor for a peak.
    pub min_score: f64,
    pub nms_radius: f64,
}

impl HoughParams {
    /// Eye/nose-sized search range for a region of the given size.
    pub fn for_region(width: usize, height: usize) -> Self {
        let side = width.min(height) as f64;
        let r_min = (0.01 * side).round().max(2.0) as usize;
        let r_max = ((0.08 * side).round() as usize).max(r_min);
        HoughParams {
            r_min,
            r_max,
            mag_threshold: 300.0,
            peak_threshold: 0.3,
            min_score: 0.35,
            nms_radius: (r_max as f64 / 2.0).max(3.0),
        }
    }
}

/// Vote volume indexed by (radius, cy, cx), scored per cell.
#[derive(Clone, Debug)]
pub struct HoughAccumulator {
    width: usize,
    height: usize,
    r_min: usize,
    scores: Vec<f64>,
}

impl HoughAccumulator {
    pub fn radii(&self) -> std::ops::RangeInclusive<usize> {
        let layers = self.scores.len() / (self.width * self.height);
        self.r_min..=self.r_min + layers - 1
    }

    #[inline]
    fn score(&self, r: usize, x: usize, y: usize) -> f64 {
        self.scores[((r - self.r_min) * self.height + y) * self.width + x]
    }

    /// Max over radii, scaled to [0, 255].
    pub fn projection(&self) -> GrayPlane {
        let mut best = vec![0.0f64; self.width * self.height];
        for layer in self.scores.chunks_exact(self.width * self.height) {
            for (b, &s) in best.iter_mut().zip(layer) {
                *b = b.max(s);
            }
        }
        GrayPlane::from_fn(self.width, self.height, |x, y| best[y * self.width + x] * 255.0)
    }

    /// Peaks above both thresholds, greedily suppressed within `nms_radius`,
    /// sorted by score descending then (cy, cx, r) ascending.
    pub fn peaks(&self, params: &HoughParams) -> Vec<Circle> {
        let global = self.scores.iter().copied().fold(0.0, f64::max);
        if global <= 0.0 {
            return Vec::new();
        }
        let floor = (params.peak_threshold * global).max(params.min_score);
        let mut candidates = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                // best radius at this center
                let mut best: Option<(usize, f64)> = None;
                for r in self.radii() {
                    let s = self.score(r, x, y);
                    if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                        best = Some((r, s));
                    }
                }
                if let Some((r, s)) = best {
                    if s >= floor {
                        candidates.push(Circle {
                            cx: x as f64,
                            cy: y as f64,
                            r: r as f64,
                            score: s,
                        });
                    }
                }
            }
        }
        candidates.sort_by(circle_order);
        let mut kept: Vec<Circle> = Vec::new();
        let nms2 = params.nms_radius * params.nms_radius;
        for c in candidates {
            if kept
                .iter()
                .all(|k| (k.cx - c.cx).powi(2) + (k.cy - c.cy).powi(2) > nms2)
            {
                kept.push(c);
            }
        }
        kept
    }
}

pub(crate) fn circle_order(a: &Circle, b: &Circle) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.cy.total_cmp(&b.cy))
        .then(a.cx.total_cmp(&b.cx))
        .then(a.r.total_cmp(&b.r))
}

fn validate(gray: &GrayPlane, params: &HoughParams) -> Result<()> {
    let half = gray.width().min(gray.height()) / 2;
    if params.r_min < 1 || params.r_min > params.r_max || params.r_max > half {
        return Err(Error::arg(format!(
            "radius range [{}, {}] must satisfy 1 <= r_min <= r_max <= {half}",
            params.r_min, params.r_max
        )));
    }
    Ok(())
}

/// Accumulates gradient-direction votes. Both polarities vote, so dark
/// discs on light fur and light discs on dark fur are both found.
pub fn hough_accumulate(gray: &GrayPlane, params: &HoughParams) -> Result<HoughAccumulator> {
    validate(gray, params)?;
    let g = gradients(gray)?;
    let (w, h) = (gray.width(), gray.height());
    let layers = params.r_max - params.r_min + 1;
    let mut votes = vec![0u32; layers * w * h];
    for y in 0..h {
        for x in 0..w {
            let m = g.magnitude.get(x, y);
            if m < params.mag_threshold || m == 0.0 {
                continue;
            }
            let (ux, uy) = (g.gx.get(x, y) / m, g.gy.get(x, y) / m);
            for (layer, r) in (params.r_min..=params.r_max).enumerate() {
                for sign in [-1.0, 1.0] {
                    let cx = (x as f64 + sign * r as f64 * ux).round();
                    let cy = (y as f64 + sign * r as f64 * uy).round();
                    if cx >= 0.0 && cy >= 0.0 && (cx as usize) < w && (cy as usize) < h {
                        votes[(layer * h + cy as usize) * w + cx as usize] += 1;
                    }
                }
            }
        }
    }
    // 3×3 box support, normalized by the expected two-pixel edge band
    let mut scores = vec![0.0f64; votes.len()];
    for (layer, r) in (params.r_min..=params.r_max).enumerate() {
        let expected = 4.0 * std::f64::consts::PI * r as f64;
        let base = layer * w * h;
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0u32;
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        sum += votes[base + ny * w + nx];
                    }
                }
                scores[base + y * w + x] = (sum as f64 / expected).min(1.0);
            }
        }
    }
    Ok(HoughAccumulator {
        width: w,
        height: h,
        r_min: params.r_min,
        scores,
    })
}

pub fn hough_circles(gray: &GrayPlane, params: &HoughParams) -> Result<Vec<Circle>> {
    Ok(hough_accumulate(gray, params)?.peaks(params))
}
