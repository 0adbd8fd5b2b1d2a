use super::hough::{circle_order, Circle};
use crate::imgio::BBox;

/// Only the strongest circles enter the triple search.
pub const FACE_CANDIDATES: usize = 20;

const EYE_RATIO: (f64, f64) = (0.5, 2.0);
const MAX_TILT_DEG: f64 = 30.0;
const NOSE_DROP: (f64, f64) = (0.3, 1.5);
const NOSE_OFFSET: f64 = 0.35;
const NOSE_SIZE: (f64, f64) = (0.5, 2.5);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceTriangle {
    pub eye_left: Circle,
    pub eye_right: Circle,
    pub nose: Circle,
    pub quality: f64,
}

impl FaceTriangle {
    pub fn eye_distance(&self) -> f64 {
        (self.eye_right.cx - self.eye_left.cx).hypot(self.eye_right.cy - self.eye_left.cy)
    }

    pub fn centroid(&self) -> (f64, f64) {
        (
            (self.eye_left.cx + self.eye_right.cx + self.nose.cx) / 3.0,
            (self.eye_left.cy + self.eye_right.cy + self.nose.cy) / 3.0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Detected,
    Absent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadBox {
    pub bbox: BBox,
    pub provenance: Provenance,
}

/// 1 at the interval midpoint, 0 at either end.
fn centrality(v: f64, lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (1.0 - (v - mid).abs() / half).clamp(0.0, 1.0)
}

/// Geometric check of one (left eye, right eye, nose) assignment. Returns
/// the slack factor in [0.5, 1] when every constraint holds.
fn triangle_slack(e1: &Circle, e2: &Circle, nose: &Circle) -> Option<f64> {
    if e1.cx >= e2.cx {
        return None;
    }
    let (dx, dy) = (e2.cx - e1.cx, e2.cy - e1.cy);
    let d = dx.hypot(dy);
    if d <= e1.r + e2.r {
        return None;
    }
    let ratio = e1.r / e2.r;
    if !(EYE_RATIO.0..=EYE_RATIO.1).contains(&ratio) {
        return None;
    }
    let tilt = dy.abs().atan2(dx).to_degrees();
    if tilt > MAX_TILT_DEG {
        return None;
    }
    let (mx, my) = (0.5 * (e1.cx + e2.cx), 0.5 * (e1.cy + e2.cy));
    let drop = (nose.cy - my) / d;
    if !(NOSE_DROP.0..=NOSE_DROP.1).contains(&drop) {
        return None;
    }
    let offset = (nose.cx - mx).abs() / d;
    if offset > NOSE_OFFSET {
        return None;
    }
    let size = nose.r / (0.5 * (e1.r + e2.r));
    if !(NOSE_SIZE.0..=NOSE_SIZE.1).contains(&size) {
        return None;
    }
    let parts = [
        centrality(ratio.ln(), EYE_RATIO.0.ln(), EYE_RATIO.1.ln()),
        1.0 - tilt / MAX_TILT_DEG,
        centrality(drop, NOSE_DROP.0, NOSE_DROP.1),
        1.0 - offset / NOSE_OFFSET,
        centrality(size.ln(), NOSE_SIZE.0.ln(), NOSE_SIZE.1.ln()),
    ];
    Some(0.5 + 0.5 * parts.iter().sum::<f64>() / parts.len() as f64)
}

/// Best eye-eye-nose constellation among the strongest circles, or `None`.
/// Image dimensions bound where a constellation may sit.
pub fn find_face(circles: &[Circle], img_w: usize, img_h: usize) -> Option<FaceTriangle> {
    let mut top: Vec<Circle> = circles
        .iter()
        .copied()
        .filter(|c| c.cx >= 0.0 && c.cy >= 0.0 && c.cx < img_w as f64 && c.cy < img_h as f64)
        .collect();
    top.sort_by(circle_order);
    top.truncate(FACE_CANDIDATES);
    let mut best: Option<FaceTriangle> = None;
    for (i, e1) in top.iter().enumerate() {
        for (j, e2) in top.iter().enumerate() {
            if j == i {
                continue;
            }
            for (k, nose) in top.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let Some(slack) = triangle_slack(e1, e2, nose) else {
                    continue;
                };
                let quality = (e1.score + e2.score + nose.score) / 3.0 * slack;
                if best.is_none_or(|b| quality > b.quality) {
                    best = Some(FaceTriangle {
                        eye_left: *e1,
                        eye_right: *e2,
                        nose: *nose,
                        quality,
                    });
                }
            }
        }
    }
    best
}

/// Square of side `margin · eye distance` centered on the triangle
/// centroid, clipped to the image.
pub fn head_bbox(face: &FaceTriangle, img_w: usize, img_h: usize, margin: f64) -> HeadBox {
    let side = (margin * face.eye_distance()).round().max(1.0);
    let (cx, cy) = face.centroid();
    let clip = |lo: f64, len: usize| -> (usize, usize) {
        let start = lo.round().clamp(0.0, (len - 1) as f64) as usize;
        let end = ((lo + side).round().clamp(0.0, len as f64) as usize).max(start + 1);
        (start, end - start)
    };
    let (x, w) = clip(cx - side / 2.0, img_w);
    let (y, h) = clip(cy - side / 2.0, img_h);
    HeadBox {
        bbox: BBox::new(x, y, w, h),
        provenance: Provenance::Detected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle(cx: f64, cy: f64, r: f64) -> Circle {
        Circle { cx, cy, r, score: 1.0 }
    }

    fn canonical() -> Vec<Circle> {
        vec![circle(40.0, 40.0, 5.0), circle(60.0, 40.0, 5.0), circle(50.0, 58.0, 6.0)]
    }

    #[test]
    fn accepts_frontal_triangle() {
        // d = 20; nose drop 18/20 = 0.9 in [0.3, 1.5]; offset 0; radius ratio 1;
        // nose size 6/5 = 1.2 in [0.5, 2.5]; tilt 0
        let face = find_face(&canonical(), 100, 100).expect("face");
        assert_eq!(face.eye_left.cx, 40.0);
        assert_eq!(face.eye_right.cx, 60.0);
        assert_eq!((face.nose.cx, face.nose.cy), (50.0, 58.0));
        assert!(face.quality > 0.0 && face.quality <= 1.0);
    }

    #[test]
    fn rejects_collinear_and_short_lists() {
        let line = vec![circle(40.0, 40.0, 5.0), circle(50.0, 40.0, 5.0), circle(60.0, 40.0, 5.0)];
        assert!(find_face(&line, 100, 100).is_none());
        assert!(find_face(&canonical()[..2], 100, 100).is_none());
        assert!(find_face(&[], 100, 100).is_none());
    }

    #[test]
    fn head_box_arithmetic() {
        let face = find_face(&canonical(), 200, 200).unwrap();
        let head = head_bbox(&face, 200, 200, 3.0);
        assert_eq!(head.bbox, BBox::new(20, 16, 60, 60));
        assert_eq!(head.provenance, Provenance::Detected);
        let tight = head_bbox(&face, 200, 200, 1.0);
        assert_eq!((tight.bbox.w, tight.bbox.h), (20, 20));
    }

    #[test]
    fn head_box_clipped_at_corner() {
        let shifted: Vec<Circle> = canonical()
            .into_iter()
            .map(|c| Circle {
                cx: c.cx - 34.0,
                cy: c.cy - 34.0,
                ..c
            })
            .collect();
        let face = find_face(&shifted, 200, 200).unwrap();
        let head = head_bbox(&face, 200, 200, 3.0);
        assert_eq!((head.bbox.x, head.bbox.y), (0, 0));
        assert!(head.bbox.fits(200, 200));
        for c in [face.eye_left, face.eye_right, face.nose] {
            assert!(head.bbox.contains(c.cx as usize, c.cy as usize));
        }
    }

    fn arb_circles() -> impl Strategy<Value = Vec<Circle>> {
        proptest::collection::vec(
            (0.0f64..100.0, 0.0f64..100.0, 2.0f64..9.0, 0.01f64..1.0).prop_map(|(cx, cy, r, score)| Circle {
                cx: cx.round(),
                cy: cy.round(),
                r: r.round(),
                score,
            }),
            0..25,
        )
    }

    proptest! {
        #[test]
        fn accepted_faces_respect_constraints(circles in arb_circles()) {
            if let Some(f) = find_face(&circles, 100, 100) {
                prop_assert!(f.eye_left.cx < f.eye_right.cx);
                prop_assert!(f.nose.cy > 0.5 * (f.eye_left.cy + f.eye_right.cy));
                prop_assert!(triangle_slack(&f.eye_left, &f.eye_right, &f.nose).is_some());
                prop_assert!(f.quality > 0.0 && f.quality <= 1.0);
                let head = head_bbox(&f, 100, 100, 3.0);
                prop_assert!(head.bbox.fits(100, 100));
                for c in [f.eye_left, f.eye_right, f.nose] {
                    prop_assert!(head.bbox.contains(c.cx as usize, c.cy as usize));
                }
            }
        }

        #[test]
        fn deterministic(circles in arb_circles()) {
            prop_assert_eq!(find_face(&circles, 100, 100), find_face(&circles, 100, 100));
        }
    }
}
