//! Raster containers, codecs, and the color transforms every extractor builds on.
//!
//! Binary PPM (P6) and PGM (P5) are implemented here because fixtures and
//! caches depend on their exact bytes; PNG and JPEG go through the `image`
//! crate.

use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("image dimensions {width}x{height} must be positive")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::arg(format!(
                "pixel buffer has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Image { width, height, data })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn full_box(&self) -> BBox {
        BBox {
            x: 0,
            y: 0,
            w: self.width,
            h: self.height,
        }
    }
}

/// Real-valued single-channel plane.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayPlane {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::arg(format!(
                "plane {width}x{height} does not match {} values",
                values.len()
            )));
        }
        Ok(GrayPlane { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        GrayPlane { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayPlane {
        GrayPlane {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Axis-aligned box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        BBox { x, y, w, h }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::Bounds {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                width,
                height,
            })
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

enum Format {
    Ppm,
    Png,
    Jpeg,
}

fn sniff(bytes: &[u8]) -> Option<Format> {
    if bytes.starts_with(b"P6") {
        Some(Format::Ppm)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        Some(Format::Png)
    } else if bytes.starts_with(&[0xFF, 0xD8]) {
        Some(Format::Jpeg)
    } else {
        None
    }
}

/// Decodes PNG, JPEG, or binary PPM into RGB. Alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 3 {
        return Err(Error::Decode {
            offset: bytes.len(),
            cause: "file too short to carry a header".into(),
        });
    }
    match sniff(bytes) {
        Some(Format::Ppm) => {
            let (w, h, data) = parse_netpbm(bytes, b"P6", 3)?;
            Image::new(w, h, data)
        }
        Some(Format::Png) => decode_with_image_crate(bytes, image::ImageFormat::Png),
        Some(Format::Jpeg) => decode_with_image_crate(bytes, image::ImageFormat::Jpeg),
        None => Err(Error::UnsupportedFormat),
    }
}

fn decode_with_image_crate(bytes: &[u8], format: image::ImageFormat) -> Result<Image> {
    let dynamic = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
        offset: 0,
        cause: e.to_string(),
    })?;
    let rgb = dynamic.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::new(w as usize, h as usize, rgb.into_raw())
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Binary PPM (P6, maxval 255).
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Binary PGM (P5, maxval 255).
pub fn encode_pgm(width: usize, height: usize, values: &[u8]) -> Vec<u8> {
    debug_assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(values);
    out
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .expect("buffer length checked at construction");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

/// Parses a binary netpbm file with the given magic and channel count.
/// Returns (width, height, samples) with samples rescaled to maxval 255.
pub(crate) fn parse_netpbm(bytes: &[u8], magic: &[u8], channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    if !bytes.starts_with(magic) {
        return Err(Error::Decode {
            offset: 0,
            cause: format!("expected magic {}", String::from_utf8_lossy(magic)),
        });
    }
    let mut pos = magic.len();
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Decode {
                offset: pos,
                cause: format!("missing header field {}", ["width", "height", "maxval"][i]),
            });
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| Error::Decode {
            offset: start,
            cause: format!("header field `{text}` out of range"),
        })?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::Decode {
                offset: pos,
                cause: "expected a single whitespace byte after maxval".into(),
            })
        }
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(Error::Decode {
            offset: pos,
            cause: format!("zero dimension {w}x{h}"),
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Decode {
            offset: pos,
            cause: format!("unsupported maxval {maxval}"),
        });
    }
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Decode {
            offset: pos,
            cause: "dimensions overflow".into(),
        })?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::Decode {
            offset: bytes.len(),
            cause: format!("truncated raster: {} of {need} bytes", raster.len()),
        });
    }
    let mut data = raster[..need].to_vec();
    if maxval != 255 {
        for v in &mut data {
            *v = ((*v as usize * 255 + maxval / 2) / maxval).min(255) as u8;
        }
    }
    Ok((w, h, data))
}

/// BT.601 luma, unrounded.
pub fn to_grayscale(img: &Image) -> GrayPlane {
    let values = img
        .pixels()
        .map(|[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect();
    GrayPlane {
        width: img.width,
        height: img.height,
        values,
    }
}

/// Opponent color planes (O1, O2, O3).
pub fn to_opponent(img: &Image) -> (GrayPlane, GrayPlane, GrayPlane) {
    let n = img.width * img.height;
    let (mut o1, mut o2, mut o3) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (s2, s6, s3) = (2f64.sqrt(), 6f64.sqrt(), 3f64.sqrt());
    for [r, g, b] in img.pixels() {
        let (r, g, b) = (r as f64, g as f64, b as f64);
        o1.push((r - g) / s2);
        o2.push((r + g - 2.0 * b) / s6);
        o3.push((r + g + b) / s3);
    }
    let plane = |values| GrayPlane {
        width: img.width,
        height: img.height,
        values,
    };
    (plane(o1), plane(o2), plane(o3))
}

/// Inverse of [`to_opponent`] for a single pixel.
pub fn opponent_to_rgb(o1: f64, o2: f64, o3: f64) -> [f64; 3] {
    let sum = 3f64.sqrt() * o3;
    let b = (sum - 6f64.sqrt() * o2) / 3.0;
    let rg = sum - b;
    let r = (rg + 2f64.sqrt() * o1) / 2.0;
    [r, rg - r, b]
}

pub fn crop(img: &Image, bbox: BBox) -> Result<Image> {
    bbox.check(img.width, img.height)?;
    let mut data = Vec::with_capacity(bbox.area() * 3);
    for y in bbox.y..bbox.y + bbox.h {
        let start = (y * img.width + bbox.x) * 3;
        data.extend_from_slice(&img.data[start..start + bbox.w * 3]);
    }
    Ok(Image {
        width: bbox.w,
        height: bbox.h,
        data,
    })
}

pub fn crop_plane(plane: &GrayPlane, bbox: BBox) -> Result<GrayPlane> {
    bbox.check(plane.width, plane.height)?;
    let mut values = Vec::with_capacity(bbox.area());
    for y in bbox.y..bbox.y + bbox.h {
        let start = y * plane.width + bbox.x;
        values.extend_from_slice(&plane.values[start..start + bbox.w]);
    }
    Ok(GrayPlane {
        width: bbox.w,
        height: bbox.h,
        values,
    })
}

/// Source coordinate and blend weight for one output position (pixel-center aligned).
fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let pos = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Bilinear resize. Aspect ratio is the caller's business.
pub fn resize(img: &Image, new_w: usize, new_h: usize) -> Result<Image> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::arg(format!("resize target {new_w}x{new_h} has a zero dimension")));
    }
    if new_w == img.width && new_h == img.height {
        return Ok(img.clone());
    }
    let xs: Vec<_> = (0..new_w).map(|x| sample_axis(x, img.width, new_w)).collect();
    let mut data = Vec::with_capacity(new_w * new_h * 3);
    for y in 0..new_h {
        let (y0, y1, ty) = sample_axis(y, img.height, new_h);
        for &(x0, x1, tx) in &xs {
            let (p00, p10, p01, p11) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
            for c in 0..3 {
                let top = lerp(p00[c] as f64, p10[c] as f64, tx);
                let bottom = lerp(p01[c] as f64, p11[c] as f64, tx);
                data.push(lerp(top, bottom, ty).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(Image {
        width: new_w,
        height: new_h,
        data,
    })
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_single_pixel_ppm() {
        let mut bytes = b"P6\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (1, 1));
        assert_eq!(img.pixel(0, 0), [255, 0, 0]);
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n2 1 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn rejects_short_and_truncated_input() {
        assert!(matches!(decode_image(b"P6"), Err(Error::Decode { .. })));
        let bytes = b"P6\n2 2\n255\n\x00\x00\x00".to_vec();
        match decode_image(&bytes) {
            Err(Error::Decode { offset, cause }) => {
                assert_eq!(offset, bytes.len());
                assert!(cause.contains("truncated"));
            }
            other => panic!("expected decode error, got {other:?}"),
        }
        assert!(matches!(decode_image(b"GIF89a"), Err(Error::UnsupportedFormat)));
    }

    #[test]
    fn png_roundtrip_through_image_crate() {
        let img = Image::new(2, 1, vec![10, 20, 30, 40, 50, 60]).unwrap();
        let png = encode_png(&img).unwrap();
        assert_eq!(decode_image(&png).unwrap(), img);
    }

    #[test]
    fn grayscale_luma() {
        let img = Image::new(3, 1, vec![255, 255, 255, 255, 0, 0, 0, 0, 0]).unwrap();
        let g = to_grayscale(&img);
        assert!((g.get(0, 0) - 255.0).abs() < 1e-9);
        assert!((g.get(1, 0) - 76.245).abs() < 1e-9);
        assert_eq!(g.get(2, 0), 0.0);
    }

    #[test]
    fn opponent_values() {
        let img = Image::new(3, 1, vec![100, 100, 100, 255, 0, 0, 0, 0, 0]).unwrap();
        let (o1, o2, o3) = to_opponent(&img);
        assert!(o1.get(0, 0).abs() < 1e-12 && o2.get(0, 0).abs() < 1e-12);
        assert!((o3.get(0, 0) - 100.0 * 3f64.sqrt()).abs() < 1e-9);
        assert!((o1.get(1, 0) - 180.31).abs() < 0.01);
        assert!((o2.get(1, 0) - 104.10).abs() < 0.01);
        assert_eq!((o1.get(2, 0), o2.get(2, 0), o3.get(2, 0)), (0.0, 0.0, 0.0));
    }

    #[test]
    fn crop_cases() {
        let img = Image::new(2, 2, (0..12).collect()).unwrap();
        assert_eq!(crop(&img, img.full_box()).unwrap(), img);
        assert_eq!(crop(&img, BBox::new(0, 0, 1, 1)).unwrap().data(), &[0, 1, 2]);
        assert!(matches!(crop(&img, BBox::new(1, 0, 2, 1)), Err(Error::Bounds { .. })));
    }

    #[test]
    fn resize_cases() {
        let img = Image::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        assert_eq!(resize(&img, 2, 1).unwrap(), img);
        let wide = resize(&img, 3, 1).unwrap();
        for c in wide.pixel(1, 0) {
            assert!((c as i32 - 128).abs() <= 1);
        }
        assert!(matches!(resize(&img, 0, 4), Err(Error::Argument(_))));
        let flat = Image::filled(5, 3, [12, 34, 56]);
        let big = resize(&flat, 11, 7).unwrap();
        assert!(big.pixels().all(|p| p == [12, 34, 56]));
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h * 3).prop_map(move |d| Image::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn ppm_roundtrip_is_identity(img in arb_image()) {
            prop_assert_eq!(decode_image(&encode_ppm(&img)).unwrap(), img);
        }

        #[test]
        fn opponent_inverse_recovers_rgb(img in arb_image()) {
            let (o1, o2, o3) = to_opponent(&img);
            for (i, p) in img.pixels().enumerate() {
                let rgb = opponent_to_rgb(o1.values()[i], o2.values()[i], o3.values()[i]);
                for c in 0..3 {
                    prop_assert!((rgb[c] - p[c] as f64).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn resize_of_constant_is_constant(w in 1usize..9, h in 1usize..9, nw in 1usize..20, nh in 1usize..20, c in any::<[u8; 3]>()) {
            let out = resize(&Image::filled(w, h, c), nw, nh).unwrap();
            prop_assert!(out.pixels().all(|p| p == c));
        }
    }
}
