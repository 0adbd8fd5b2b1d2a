//! Dense SIFT: 4×4 spatial cells × 8 orientations per patch.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::imgio::{to_opponent, GrayPlane, Image};
use crate::segment::Mask;

pub const SIFT_DIM: usize = 128;
pub const OPPONENT_SIFT_DIM: usize = 3 * SIFT_DIM;

const CELLS: usize = 4;
const ORIENTATIONS: usize = 8;
const CLAMP: f64 = 0.2;
const ZERO_NORM: f64 = 1e-10;

/// Fixed-width descriptors with the pixel location of each patch center.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    locations: Vec<(u32, u32)>,
    data: Vec<f32>,
}

impl DescriptorSet {
    pub fn empty(dim: usize) -> Self {
        DescriptorSet {
            dim,
            locations: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn location(&self, i: usize) -> (u32, u32) {
        self.locations[i]
    }

    pub fn locations(&self) -> &[(u32, u32)] {
        &self.locations
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), &[f32])> {
        self.locations.iter().copied().zip(self.data.chunks_exact(self.dim))
    }

    pub fn push(&mut self, loc: (u32, u32), v: &[f32]) {
        assert_eq!(v.len(), self.dim, "descriptor length mismatch");
        self.locations.push(loc);
        self.data.extend_from_slice(v);
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }
}

/// Patch origins along one axis.
pub fn grid_count(len: usize, step: usize, patch: usize) -> usize {
    if len < patch {
        0
    } else {
        (len - patch) / step + 1
    }
}

fn check_geometry(step: usize, patch: usize) -> Result<()> {
    if patch < 8 || !patch.is_multiple_of(4) {
        return Err(Error::arg(format!("SIFT patch {patch} must be >= 8 and divisible by 4")));
    }
    if step == 0 {
        return Err(Error::arg("SIFT step must be at least 1"));
    }
    Ok(())
}

/// Central-difference magnitude and angle in [0, 2π), borders replicated.
fn polar_gradients(plane: &GrayPlane) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (plane.width(), plane.height());
    let mut mag = vec![0.0; w * h];
    let mut ang = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let dx = 0.5 * (plane.get((x + 1).min(w - 1), y) - plane.get(x.saturating_sub(1), y));
            let dy = 0.5 * (plane.get(x, (y + 1).min(h - 1)) - plane.get(x, y.saturating_sub(1)));
            let i = y * w + x;
            mag[i] = dx.hypot(dy);
            ang[i] = dy.atan2(dx).rem_euclid(TAU);
        }
    }
    (mag, ang)
}

fn normalize(desc: &mut [f64]) {
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < ZERO_NORM {
        desc.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in desc.iter_mut() {
        *v = (*v / norm).min(CLAMP);
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    desc.iter_mut().for_each(|v| *v /= norm);
}

fn describe_patch(mag: &[f64], ang: &[f64], width: usize, x0: usize, y0: usize, patch: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let cell = (patch / CELLS) as f64;
    let center = (patch as f64 - 1.0) / 2.0;
    let sigma = patch as f64 / 2.0;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    for py in 0..patch {
        let v = (py as f64 + 0.5) / cell - 0.5;
        let (by0, wy1) = (v.floor(), v - v.floor());
        for px in 0..patch {
            let i = (y0 + py) * width + x0 + px;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let g = (-((px as f64 - center).powi(2) + (py as f64 - center).powi(2)) * inv_two_sigma2).exp();
            let u = (px as f64 + 0.5) / cell - 0.5;
            let (bx0, wx1) = (u.floor(), u - u.floor());
            let o = ang[i] / TAU * ORIENTATIONS as f64;
            let (o0, wo1) = (o.floor(), o - o.floor());
            let o0 = o0 as usize % ORIENTATIONS;
            let o1 = (o0 + 1) % ORIENTATIONS;
            for (by, wy) in [(by0, 1.0 - wy1), (by0 + 1.0, wy1)] {
                if by < 0.0 || by >= CELLS as f64 || wy == 0.0 {
                    continue;
                }
                for (bx, wx) in [(bx0, 1.0 - wx1), (bx0 + 1.0, wx1)] {
                    if bx < 0.0 || bx >= CELLS as f64 || wx == 0.0 {
                        continue;
                    }
                    let base = (by as usize * CELLS + bx as usize) * ORIENTATIONS;
                    let w = m * g * wy * wx;
                    out[base + o0] += w * (1.0 - wo1);
                    out[base + o1] += w * wo1;
                }
            }
        }
    }
    normalize(out);
}

/// Dense single-channel SIFT. Patches whose center pixel is background are
/// skipped when a mask is supplied.
pub fn dense_sift(plane: &GrayPlane, step: usize, patch: usize, mask: Option<&Mask>) -> Result<DescriptorSet> {
    check_geometry(step, patch)?;
    let (w, h) = (plane.width(), plane.height());
    if let Some(m) = mask {
        if m.width() != w || m.height() != h {
            return Err(Error::arg("mask dimensions do not match the plane"));
        }
    }
    let (nx, ny) = (grid_count(w, step, patch), grid_count(h, step, patch));
    let mut set = DescriptorSet::empty(SIFT_DIM);
    if nx == 0 || ny == 0 {
        return Ok(set);
    }
    let (mag, ang) = polar_gradients(plane);
    let mut desc = vec![0.0f64; SIFT_DIM];
    let mut out = vec![0.0f32; SIFT_DIM];
    for gy in 0..ny {
        for gx in 0..nx {
            let (x0, y0) = (gx * step, gy * step);
            let (cx, cy) = (x0 + patch / 2, y0 + patch / 2);
            if mask.is_some_and(|m| !m.is_fg(cx, cy)) {
                continue;
            }
            describe_patch(&mag, &ang, w, x0, y0, patch, &mut desc);
            for (o, &d) in out.iter_mut().zip(&desc) {
                *o = d as f32;
            }
            set.push((cx as u32, cy as u32), &out);
        }
    }
    Ok(set)
}

/// Dense SIFT on the three opponent channels, concatenated per location.
pub fn opponent_sift(img: &Image, step: usize, patch: usize, mask: Option<&Mask>) -> Result<DescriptorSet> {
    let (o1, o2, o3) = to_opponent(img);
    let parts = [
        dense_sift(&o1, step, patch, mask)?,
        dense_sift(&o2, step, patch, mask)?,
        dense_sift(&o3, step, patch, mask)?,
    ];
    let mut set = DescriptorSet::empty(OPPONENT_SIFT_DIM);
    let mut buf = Vec::with_capacity(OPPONENT_SIFT_DIM);
    for i in 0..parts[0].len() {
        buf.clear();
        for p in &parts {
            buf.extend_from_slice(p.vector(i));
        }
        set.push(parts[0].location(i), &buf);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::BBox;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize, gain: f64) -> GrayPlane {
        GrayPlane::from_fn(w, h, |x, y| {
            gain * (120.0 + 60.0 * ((x as f64) * 0.7).sin() + 40.0 * ((y as f64) * 0.45 + x as f64 * 0.1).cos())
        })
    }

    fn norm(v: &[f32]) -> f64 {
        v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn constant_plane_gives_zero_descriptors() {
        let set = dense_sift(&GrayPlane::from_fn(40, 40, |_, _| 77.0), 4, 16, None).unwrap();
        assert!(!set.is_empty());
        assert!(set.raw().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_contract() {
        let set = dense_sift(&textured(48, 40, 1.0), 4, 16, None).unwrap();
        for (_, v) in set.iter() {
            let n = norm(v);
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-6);
            // post-renormalization values can exceed the clamp slightly
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn grid_arithmetic() {
        let set = dense_sift(&textured(64, 64, 1.0), 8, 16, None).unwrap();
        assert_eq!(set.len(), 49);
        assert_eq!(set.location(0), (8, 8));
        assert!(dense_sift(&textured(10, 30, 1.0), 4, 16, None).unwrap().is_empty());
    }

    #[test]
    fn geometry_validated() {
        let p = textured(32, 32, 1.0);
        assert!(dense_sift(&p, 4, 6, None).is_err());
        assert!(dense_sift(&p, 4, 10, None).is_err());
        assert!(dense_sift(&p, 0, 16, None).is_err());
    }

    #[test]
    fn mask_drops_background_centers() {
        let plane = textured(40, 40, 1.0);
        let mask = Mask::from_seed_box(40, 40, BBox::new(0, 0, 20, 40));
        let set = dense_sift(&plane, 4, 16, Some(&mask)).unwrap();
        assert!(set.locations().iter().all(|&(x, _)| x < 20));
        assert!(set.len() < dense_sift(&plane, 4, 16, None).unwrap().len());
    }

    #[test]
    fn opponent_of_gray_image_has_empty_color_blocks() {
        let plane = textured(40, 40, 1.0);
        let data = plane.values().iter().flat_map(|&v| [v.round() as u8; 3]).collect();
        let img = Image::new(40, 40, data).unwrap();
        let set = opponent_sift(&img, 4, 16, None).unwrap();
        assert_eq!(set.dim(), 384);
        for (_, v) in set.iter() {
            assert!(v[..256].iter().all(|&x| x == 0.0));
        }
        let (_, _, o3) = to_opponent(&img);
        assert_eq!(set.locations(), dense_sift(&o3, 4, 16, None).unwrap().locations());
    }

    #[test]
    fn gain_cancels_in_normalization() {
        let a = dense_sift(&textured(40, 40, 1.0), 4, 16, None).unwrap();
        let b = dense_sift(&textured(40, 40, 0.5), 4, 16, None).unwrap();
        for ((_, u), (_, v)) in a.iter().zip(b.iter()) {
            let dot: f64 = u.iter().zip(v).map(|(&x, &y)| x as f64 * y as f64).sum();
            let cos = dot / (norm(u) * norm(v));
            assert!(cos >= 1.0 - 1e-6);
        }
    }

    proptest! {
        #[test]
        fn descriptor_count_matches_grid(w in 1usize..60, h in 1usize..60, step in 1usize..9, quarter in 2usize..5) {
            let patch = quarter * 4;
            let set = dense_sift(&GrayPlane::from_fn(w, h, |x, y| ((x * 7 + y * 3) % 11) as f64), step, patch, None).unwrap();
            prop_assert_eq!(set.len(), grid_count(w, step, patch) * grid_count(h, step, patch));
        }
    }
}
