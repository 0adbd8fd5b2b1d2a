//! Per-image work shared by the stages.

use log::warn;

use super::config::PipelineConfig;
use super::manifest::ManifestEntry;
use crate::descript::{color_name_items, lbp_items, opponent_sift, ColorNameTable, DescriptorSet, LBP_BINS, N_COLOR_NAMES};
use crate::encode::{pyramid_pool, quantize, Block, FeatureSchema, PyramidSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::headdet::{detect_face, head_bbox, Detection, HeadBox, Provenance};
use crate::imgio::{crop, read_image, resize, to_grayscale, BBox, Image};
use crate::segment::{grabcut, Mask};

/// Detection below this crop side is not attempted.
const MIN_DETECT_SIDE: usize = 16;

/// Image at working resolution with its box in the same frame.
pub(crate) struct Loaded {
    pub img: Image,
    pub bbox: BBox,
}

pub(crate) fn load(entry: &ManifestEntry, cfg: &PipelineConfig) -> Result<Loaded> {
    let img = read_image(&entry.path)?;
    let (w, h) = (img.width(), img.height());
    let longest = w.max(h);
    if cfg.max_dim == 0 || longest <= cfg.max_dim {
        return Ok(Loaded { img, bbox: entry.bbox });
    }
    let s = cfg.max_dim as f64 / longest as f64;
    let (nw, nh) = (((w as f64 * s).round() as usize).max(1), ((h as f64 * s).round() as usize).max(1));
    let img = resize(&img, nw, nh)?;
    let b = entry.bbox;
    let span = |start: usize, len: usize, limit: usize| {
        let lo = ((start as f64 * s).floor() as usize).min(limit - 1);
        let hi = (((start + len) as f64 * s).ceil() as usize).clamp(lo + 1, limit);
        (lo, hi - lo)
    };
    let (x, bw) = span(b.x, b.w, nw);
    let (y, bh) = span(b.y, b.h, nh);
    Ok(Loaded { img, bbox: BBox::new(x, y, bw, bh) })
}

/// GrabCut mask over the whole working image. A box covering the whole
/// image leaves nothing to model as background, so everything is kept.
pub(crate) fn segment(entry: &ManifestEntry, l: &Loaded, cfg: &PipelineConfig) -> Result<Mask> {
    match grabcut(&l.img, l.bbox, &cfg.grabcut(entry.seed(cfg.seed, "grabcut"))) {
        Ok(s) => Ok(s.mask),
        Err(Error::NoBackground) => {
            warn!("{}: box covers the whole image, using it as the mask", entry.name);
            Ok(Mask::all_foreground(l.img.width(), l.img.height()))
        }
        Err(e) => Err(e),
    }
}

/// Head box in working-image coordinates; the body box when no face is found.
pub(crate) fn detect_head(l: &Loaded, cfg: &PipelineConfig) -> Result<(HeadBox, Option<Detection>)> {
    let b = l.bbox;
    if b.w.min(b.h) < MIN_DETECT_SIDE {
        return Ok((HeadBox { bbox: b, provenance: Provenance::Absent }, None));
    }
    let region = crop(&l.img, b)?;
    let det = detect_face(&region, &cfg.hough(b.w, b.h))?;
    let head = match &det.face {
        Some(face) => {
            let hb = head_bbox(face, b.w, b.h, cfg.head_margin).bbox;
            HeadBox {
                bbox: BBox::new(hb.x + b.x, hb.y + b.y, hb.w, hb.h),
                provenance: Provenance::Detected,
            }
        }
        None => HeadBox { bbox: b, provenance: Provenance::Absent },
    };
    Ok((head, Some(det)))
}

pub(crate) fn head_to_text(h: &HeadBox) -> String {
    let b = h.bbox;
    let p = match h.provenance {
        Provenance::Detected => "detected",
        Provenance::Absent => "absent",
    };
    format!("{} {} {} {} {p}\n", b.x, b.y, b.w, b.h)
}

pub(crate) fn head_from_text(s: &str) -> Result<HeadBox> {
    let f: Vec<&str> = s.split_whitespace().collect();
    let bad = || Error::Format(format!("malformed head record `{}`", s.trim()));
    if f.len() != 5 {
        return Err(bad());
    }
    let n = |i: usize| f[i].parse::<usize>().map_err(|_| bad());
    let provenance = match f[4] {
        "detected" => Provenance::Detected,
        "absent" => Provenance::Absent,
        _ => return Err(bad()),
    };
    Ok(HeadBox {
        bbox: BBox::new(n(0)?, n(1)?, n(2)?, n(3)?),
        provenance,
    })
}

fn check_frame(what: &str, b: BBox, l: &Loaded) -> Result<()> {
    if !b.fits(l.img.width(), l.img.height()) {
        return Err(Error::Format(format!(
            "cached {what} box does not fit the {}x{} working image",
            l.img.width(),
            l.img.height()
        )));
    }
    Ok(())
}

/// Body region and its mask, both cropped to the box.
pub(crate) fn body_region(l: &Loaded, mask: &Mask) -> Result<(Image, Mask)> {
    if mask.width() != l.img.width() || mask.height() != l.img.height() {
        return Err(Error::Format("cached mask does not match the working image".into()));
    }
    Ok((crop(&l.img, l.bbox)?, mask.crop(l.bbox)?))
}

pub(crate) fn body_descriptors(region: &Image, mask: &Mask, cfg: &PipelineConfig) -> Result<DescriptorSet> {
    opponent_sift(region, cfg.sift_step_body, cfg.sift_patch, Some(mask))
}

pub(crate) fn head_region(l: &Loaded, head: &HeadBox) -> Result<Image> {
    check_frame("head", head.bbox, l)?;
    crop(&l.img, head.bbox)
}

pub(crate) fn head_descriptors(region: &Image, cfg: &PipelineConfig) -> Result<DescriptorSet> {
    opponent_sift(region, cfg.sift_step_head, cfg.sift_patch, None)
}

pub(crate) struct Vocabs {
    pub body: Vocabulary,
    pub head: Vocabulary,
}

pub(crate) fn schema(cfg: &PipelineConfig, vocabs: &Vocabs) -> Result<FeatureSchema> {
    let p = PyramidSpec::new(cfg.pyramid_levels)?;
    let pc = PyramidSpec::new(cfg.pyramid_levels_color)?;
    FeatureSchema::new(
        cfg.blocks
            .iter()
            .map(|&b| {
                let len = match b {
                    Block::SiftBody => p.output_len(vocabs.body.k()),
                    Block::ColorNames => pc.output_len(N_COLOR_NAMES),
                    Block::LbpS1 | Block::LbpS2 | Block::LbpS4 => p.output_len(LBP_BINS),
                    Block::SiftHead => p.output_len(vocabs.head.k()),
                };
                (b, len)
            })
            .collect(),
    )
}

/// Pooled histograms for every configured block.
pub(crate) fn block_histograms(
    name: &str,
    l: &Loaded,
    mask: &Mask,
    head: &HeadBox,
    vocabs: &Vocabs,
    table: &ColorNameTable,
    cfg: &PipelineConfig,
) -> Result<Vec<(Block, Vec<f64>)>> {
    let p = PyramidSpec::new(cfg.pyramid_levels)?;
    let pc = PyramidSpec::new(cfg.pyramid_levels_color)?;
    let (region, rmask) = body_region(l, mask)?;
    let (rw, rh) = (region.width(), region.height());
    if rmask.fg_count() == 0 {
        warn!("{name}: empty foreground, masked blocks are zero");
    }
    let gray = to_grayscale(&region);
    let mut out = Vec::with_capacity(cfg.blocks.len());
    for &b in &cfg.blocks {
        let hist = match b {
            Block::SiftBody => {
                let items = quantize(&body_descriptors(&region, &rmask, cfg)?, &vocabs.body)?;
                pyramid_pool(&items, vocabs.body.k(), rw, rh, p)?
            }
            Block::ColorNames => pyramid_pool(&color_name_items(&region, Some(&rmask), table)?, N_COLOR_NAMES, rw, rh, pc)?,
            Block::LbpS1 | Block::LbpS2 | Block::LbpS4 => {
                let s = match b {
                    Block::LbpS1 => 1,
                    Block::LbpS2 => 2,
                    _ => 4,
                };
                match lbp_items(&gray, s, Some(&rmask)) {
                    Ok(items) => pyramid_pool(&items, LBP_BINS, rw, rh, p)?,
                    Err(e) => {
                        warn!("{name}: {e}; {b} left at zero");
                        vec![0.0; p.output_len(LBP_BINS)]
                    }
                }
            }
            Block::SiftHead => {
                let hr = head_region(l, head)?;
                let items = quantize(&head_descriptors(&hr, cfg)?, &vocabs.head)?;
                pyramid_pool(&items, vocabs.head.k(), hr.width(), hr.height(), p)?
            }
        };
        out.push((b, hist));
    }
    Ok(out)
}

/// Image with the background darkened, for inspection.
pub(crate) fn mask_overlay(img: &Image, mask: &Mask) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !mask.is_fg(x, y) {
                out.set_pixel(x, y, img.pixel(x, y).map(|c| c / 4));
            }
        }
    }
    out
}
