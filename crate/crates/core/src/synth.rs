//! Deterministic synthetic renders: face constellations for the head
//! detector and the five-breed desk dataset used end to end.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imgio::{encode_ppm, BBox, Image};

/// Ground truth for one synthetic face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceTruth {
    /// (cx, cy, r) for left eye, right eye, nose.
    pub eyes: [(f64, f64, f64); 2],
    pub nose: (f64, f64, f64),
}

impl FaceTruth {
    pub fn centers(&self) -> [(f64, f64); 3] {
        [
            (self.eyes[0].0, self.eyes[0].1),
            (self.eyes[1].0, self.eyes[1].1),
            (self.nose.0, self.nose.1),
        ]
    }
}

fn jitter(rng: &mut ChaCha8Rng, v: f64, frac: f64) -> f64 {
    v * (1.0 + rng.gen_range(-frac..=frac))
}

fn fill_disc(img: &mut Image, cx: f64, cy: f64, r: f64, rgb: [u8; 3]) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (x0, x1) = ((cx - r).floor() as isize, (cx + r).ceil() as isize);
    let (y0, y1) = ((cy - r).floor() as isize, (cy + r).ceil() as isize);
    for y in y0.max(0)..=y1.min(h - 1) {
        for x in x0.max(0)..=x1.min(w - 1) {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                img.set_pixel(x as usize, y as usize, rgb);
            }
        }
    }
}

fn add_noise(img: &mut Image, rng: &mut ChaCha8Rng, amplitude: i32) {
    if amplitude == 0 {
        return;
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            let n = rng.gen_range(-amplitude..=amplitude);
            let p = img.pixel(x, y);
            img.set_pixel(x, y, p.map(|c| (c as i32 + n).clamp(0, 255) as u8));
        }
    }
}

/// Three dark discs in frontal-face layout on a light 100×100 field, every
/// geometric parameter jittered by up to ±10%, plus uniform noise of the
/// given amplitude.
pub fn render_face(seed: u64, noise: i32) -> (Image, FaceTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 100;
    let d = jitter(&mut rng, 24.0, 0.1);
    let eye_r = [jitter(&mut rng, 5.0, 0.1), jitter(&mut rng, 5.0, 0.1)];
    let nose_r = jitter(&mut rng, 6.0, 0.1);
    let drop = jitter(&mut rng, 0.8, 0.1) * d;
    let tilt = rng.gen_range(-0.1f64..=0.1) * 0.5;
    let lateral = rng.gen_range(-0.1f64..=0.1) * d;
    let mx = rng.gen_range(35.0..65.0);
    let my = rng.gen_range(25.0..45.0);
    let (hx, hy) = (0.5 * d * tilt.cos(), 0.5 * d * tilt.sin());
    let truth = FaceTruth {
        eyes: [(mx - hx, my - hy, eye_r[0]), (mx + hx, my + hy, eye_r[1])],
        nose: (mx + lateral, my + drop, nose_r),
    };
    let mut img = Image::filled(size, size, [200, 200, 200]);
    for &(cx, cy, r) in truth.eyes.iter().chain(std::iter::once(&truth.nose)) {
        fill_disc(&mut img, cx, cy, r, [30, 30, 30]);
    }
    add_noise(&mut img, &mut rng, noise);
    (img, truth)
}

/// Faceless 100×100 field; odd seeds get uniform noise of the given amplitude.
pub fn render_blank(seed: u64, noise: i32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::filled(100, 100, [200, 200, 200]);
    if seed % 2 == 1 {
        add_noise(&mut img, &mut rng, noise);
    }
    img
}

/// Layout of the generated end-to-end dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeskSpec {
    pub classes: u32,
    pub train_per_class: usize,
    pub val_per_class: usize,
    /// Unlabeled images per class, written with class `?`.
    pub test_per_class: usize,
    pub size: usize,
}

impl Default for DeskSpec {
    fn default() -> Self {
        DeskSpec {
            classes: 5,
            train_per_class: 25,
            val_per_class: 10,
            test_per_class: 2,
            size: 128,
        }
    }
}

/// Pipeline settings sized for the desk dataset.
pub const DESK_CONFIG: &str = "\
# small vocabularies for 128px synthetic images
seed=7
vocab_body=100
vocab_head=50
vocab_pool=20000
kmeans_iters=30
heatmap_size=100
report_k=3
";

#[derive(Clone, Copy)]
enum Texture {
    Stripes,
    Spots,
    Mottled,
}

/// (base color, texture, eye distance) per class. Each cue alone leaves
/// two pairs of classes tied.
fn breed(class: u32) -> ([f64; 3], Texture, f64) {
    const BROWN: [f64; 3] = [135.0, 85.0, 45.0];
    const ORANGE: [f64; 3] = [210.0, 125.0, 45.0];
    const GREY: [f64; 3] = [145.0, 140.0, 135.0];
    match class % 5 {
        0 => (BROWN, Texture::Stripes, 15.0),
        1 => (ORANGE, Texture::Stripes, 19.0),
        2 => (ORANGE, Texture::Spots, 15.0),
        3 => (GREY, Texture::Spots, 15.0),
        _ => (GREY, Texture::Mottled, 19.0),
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// One synthetic animal on a green or blue field, with its box. Body
/// shape, pose and texture contrast vary per image, not per class.
pub fn render_desk_image(class: u32, seed: u64, size: usize) -> (Image, BBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64 / 128.0;
    let (base, texture, eye_d) = breed(class);

    let bg = if rng.gen_bool(0.5) { [75.0, 140.0, 75.0] } else { [70.0, 105.0, 170.0] };
    let (fx, fy, phase) = (rng.gen_range(0.02..0.06), rng.gen_range(0.02..0.06), rng.gen_range(0.0..6.3));
    let mut img = Image::filled(size, size, [0, 0, 0]);
    for y in 0..size {
        for x in 0..size {
            let v = 18.0 * ((x as f64 * fx + phase).sin() + (y as f64 * fy).cos()) / 2.0;
            img.set_pixel(x, y, bg.map(|c| clamp_u8(c + v)));
        }
    }

    let ax = rng.gen_range(32.0..46.0) * s;
    let ay = rng.gen_range(32.0..44.0) * s;
    let cx = size as f64 / 2.0 + rng.gen_range(-5.0..5.0) * s;
    let cy = size as f64 * 0.55 + rng.gen_range(-4.0..4.0) * s;
    let gain = rng.gen_range(0.75..1.25);
    let tint: [f64; 3] = std::array::from_fn(|i| (base[i] + rng.gen_range(-35.0..35.0)) * gain);
    let contrast = rng.gen_range(0.08..0.4);
    let period = rng.gen_range(6.0..10.0) * s;
    let angle: f64 = rng.gen_range(-0.8..0.8);
    let spots: Vec<(f64, f64, f64)> = (0..rng.gen_range(25..45))
        .map(|_| {
            (
                cx + rng.gen_range(-ax..ax),
                cy + rng.gen_range(-ay..ay),
                rng.gen_range(2.0..4.5) * s,
            )
        })
        .collect();
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(0.1..0.35) / s, rng.gen_range(0.1..0.35) / s, rng.gen_range(0.0..6.3)))
        .collect();
    let (sin_a, cos_a) = angle.sin_cos();
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if (dx / ax).powi(2) + (dy / ay).powi(2) > 1.0 {
                continue;
            }
            let shade = match texture {
                Texture::Stripes => {
                    let u = dx * cos_a + dy * sin_a;
                    if (u / period).rem_euclid(1.0) < 0.45 {
                        1.0 - contrast
                    } else {
                        1.0
                    }
                }
                Texture::Spots => {
                    if spots.iter().any(|&(sx, sy, r)| (x as f64 - sx).powi(2) + (y as f64 - sy).powi(2) <= r * r) {
                        1.0 - contrast
                    } else {
                        1.0
                    }
                }
                Texture::Mottled => {
                    let v: f64 = waves.iter().map(|&(a, b, p)| (x as f64 * a + y as f64 * b + p).sin()).sum();
                    1.0 + 0.4 * contrast * v
                }
            };
            img.set_pixel(x, y, tint.map(|c| clamp_u8(c * shade)));
        }
    }

    // face: small cream muzzle patch, eyes above it, nose on it
    let d = jitter(&mut rng, eye_d, 0.12) * s;
    let (mx, my) = (cx + rng.gen_range(-4.0..4.0) * s, cy - ay * 0.35);
    let patch = 11.0 * s;
    fill_disc(&mut img, mx, my + 0.75 * d, patch, [230, 215, 185]);
    let dark = [30, 22, 20];
    fill_disc(&mut img, mx - d / 2.0, my, jitter(&mut rng, 3.5, 0.1) * s, dark);
    fill_disc(&mut img, mx + d / 2.0, my, jitter(&mut rng, 3.5, 0.1) * s, dark);
    fill_disc(&mut img, mx, my + 0.8 * d, jitter(&mut rng, 4.5, 0.1) * s, dark);
    add_noise(&mut img, &mut rng, 14);

    let margin = 3.0 * s;
    let x0 = (cx - ax - margin).floor().max(0.0) as usize;
    let x1 = ((cx + ax + margin).ceil() as usize).min(size);
    let y0 = (cy - ay - margin).floor().max(0.0) as usize;
    let y1 = ((cy + ay + margin).ceil() as usize).min(size);
    (img, BBox::new(x0, y0, x1 - x0, y1 - y0))
}

/// Writes `images/*.ppm`, `manifest.csv` and `desk.cfg` under `dir`.
/// Returns the manifest path.
pub fn write_desk_dataset(dir: &Path, spec: &DeskSpec, seed: u64) -> Result<std::path::PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut manifest = String::from("path,class,split,x,y,w,h\n");
    for class in 0..spec.classes {
        let splits = [("train", spec.train_per_class), ("val", spec.val_per_class), ("test", spec.test_per_class)];
        let mut i = 0u64;
        for (split, n) in splits {
            for _ in 0..n {
                let s = seed.wrapping_mul(1_000_003).wrapping_add(class as u64 * 10_007 + i);
                let (img, b) = render_desk_image(class, s, spec.size);
                let name = format!("images/c{class}_{i:03}.ppm");
                let path = dir.join(&name);
                std::fs::write(&path, encode_ppm(&img)).map_err(|e| Error::io(&path, e))?;
                let label = if split == "test" { "?".to_string() } else { class.to_string() };
                manifest.push_str(&format!("{name},{label},{split},{},{},{},{}\n", b.x, b.y, b.w, b.h));
                i += 1;
            }
        }
    }
    let mpath = dir.join("manifest.csv");
    std::fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let cpath = dir.join("desk.cfg");
    std::fs::write(&cpath, DESK_CONFIG).map_err(|e| Error::io(&cpath, e))?;
    Ok(mpath)
}
