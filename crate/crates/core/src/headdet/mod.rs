//! Geometric head detection: Hough circles for eyes and nose, then a
//! constellation search for a plausible face triangle.

mod face;
mod hough;

pub use face::{find_face, head_bbox, FaceTriangle, HeadBox, Provenance, FACE_CANDIDATES};
pub use hough::{gradients, hough_accumulate, hough_circles, Circle, Gradients, HoughAccumulator, HoughParams};

use crate::error::Result;
use crate::imgio::{to_grayscale, BBox, Image};

/// Outcome of running the detector on one region.
#[derive(Clone, Debug)]
pub struct Detection {
    pub circles: Vec<Circle>,
    pub face: Option<FaceTriangle>,
}

/// Runs the whole detector on `img`.
pub fn detect_face(img: &Image, params: &HoughParams) -> Result<Detection> {
    let gray = to_grayscale(img);
    let circles = hough_circles(&gray, params)?;
    let face = find_face(&circles, img.width(), img.height());
    Ok(Detection { circles, face })
}

/// Copy of `img` with circles outlined in green and the face triangle's
/// circles in red.
pub fn annotate(img: &Image, detection: &Detection, head: Option<BBox>) -> Image {
    let mut out = img.clone();
    let mut ring = |c: &Circle, rgb: [u8; 3]| {
        let steps = (8.0 * c.r).max(16.0) as usize;
        for i in 0..steps {
            let t = i as f64 / steps as f64 * std::f64::consts::TAU;
            let x = (c.cx + c.r * t.cos()).round();
            let y = (c.cy + c.r * t.sin()).round();
            if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
                out.set_pixel(x as usize, y as usize, rgb);
            }
        }
    };
    for c in detection.circles.iter().take(FACE_CANDIDATES) {
        ring(c, [0, 255, 0]);
    }
    if let Some(face) = &detection.face {
        for c in [&face.eye_left, &face.eye_right, &face.nose] {
            ring(c, [255, 0, 0]);
        }
    }
    if let Some(b) = head {
        for x in b.x..b.x + b.w {
            out.set_pixel(x, b.y, [255, 255, 0]);
            out.set_pixel(x, b.y + b.h - 1, [255, 255, 0]);
        }
        for y in b.y..b.y + b.h {
            out.set_pixel(b.x, y, [255, 255, 0]);
            out.set_pixel(b.x + b.w - 1, y, [255, 255, 0]);
        }
    }
    out
}
