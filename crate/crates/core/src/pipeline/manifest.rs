//! Dataset manifest: `path,class,split,x,y,w,h` CSV.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::BboxPolicy;
use crate::error::{Error, Result};
use crate::imgio::{decode_image, BBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Path as written in the manifest.
    pub name: String,
    pub path: PathBuf,
    pub class: Option<u32>,
    pub split: Split,
    pub bbox: BBox,
    pub width: usize,
    pub height: usize,
    /// SHA-256 of the image file bytes.
    pub content_hash: [u8; 32],
}

impl ManifestEntry {
    /// Cache key: path, file content and box.
    pub fn key(&self) -> String {
        let b = self.bbox;
        let h = Sha256::new()
            .chain_update(self.name.as_bytes())
            .chain_update([0])
            .chain_update(self.content_hash)
            .chain_update(format!("{},{},{},{}", b.x, b.y, b.w, b.h).as_bytes())
            .finalize();
        hex::encode(&h[..16])
    }

    /// Per-image seed derived from the global seed and the path.
    pub fn seed(&self, global: u64, salt: &str) -> u64 {
        let h = Sha256::new()
            .chain_update(global.to_le_bytes())
            .chain_update(self.name.as_bytes())
            .chain_update([0])
            .chain_update(salt.as_bytes())
            .finalize();
        u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

struct Row {
    line: usize,
    name: String,
    class: Option<u32>,
    split: Split,
    bbox: (i64, i64, i64, i64),
}

fn parse_rows(text: &str) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Ingest { line: 1, msg: e.to_string() })?
        .clone();
    let want = ["path", "class", "split", "x", "y", "w", "h"];
    if header.iter().collect::<Vec<_>>() != want {
        return Err(Error::Ingest {
            line: 1,
            msg: format!("header must be `{}`", want.join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Ingest {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |msg: String| Error::Ingest { line, msg };
        let name = rec[0].to_string();
        if name.is_empty() {
            return Err(err("empty path".into()));
        }
        if !seen.insert(name.clone()) {
            return Err(err(format!("duplicate path `{name}`")));
        }
        let split = match &rec[2] {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            s => return Err(err(format!("split must be train, val or test, got `{s}`"))),
        };
        let class = match &rec[1] {
            "?" if split == Split::Test => None,
            "?" => return Err(err(format!("{split} entries need a class id"))),
            s => Some(s.parse::<u32>().map_err(|_| err(format!("bad class id `{s}`")))?),
        };
        let num = |i: usize| rec[i].parse::<i64>().map_err(|_| err(format!("bad bbox value `{}`", &rec[i])));
        rows.push(Row {
            line,
            name,
            class,
            split,
            bbox: (num(3)?, num(4)?, num(5)?, num(6)?),
        });
    }
    Ok(rows)
}

fn resolve_bbox(
    (x, y, w, h): (i64, i64, i64, i64),
    width: usize,
    height: usize,
    policy: BboxPolicy,
) -> std::result::Result<BBox, String> {
    if w <= 0 || h <= 0 {
        return Err(format!("bbox ({x},{y},{w},{h}) has non-positive size"));
    }
    let (iw, ih) = (width as i64, height as i64);
    let inside = x >= 0 && y >= 0 && x + w <= iw && y + h <= ih;
    if inside {
        return Ok(BBox::new(x as usize, y as usize, w as usize, h as usize));
    }
    match policy {
        BboxPolicy::Reject => Err(format!("bbox ({x},{y},{w},{h}) exceeds image {width}x{height}")),
        BboxPolicy::Clip => {
            let (x0, y0) = (x.clamp(0, iw), y.clamp(0, ih));
            let (x1, y1) = ((x + w).clamp(0, iw), (y + h).clamp(0, ih));
            if x1 <= x0 || y1 <= y0 {
                return Err(format!("bbox ({x},{y},{w},{h}) lies outside image {width}x{height}"));
            }
            Ok(BBox::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize))
        }
    }
}

impl Manifest {
    /// Parses the CSV and checks that every image exists, decodes, and
    /// contains its box. Relative paths resolve against `base`.
    pub fn from_text(text: &str, base: &Path, policy: BboxPolicy) -> Result<Self> {
        let rows = parse_rows(text)?;
        let entries = rows
            .par_iter()
            .map(|r| {
                let err = |msg: String| Error::Ingest { line: r.line, msg };
                let path = base.join(&r.name);
                let bytes = std::fs::read(&path).map_err(|e| err(format!("{}: {e}", path.display())))?;
                let img = decode_image(&bytes).map_err(|e| err(format!("{}: {e}", path.display())))?;
                let bbox = resolve_bbox(r.bbox, img.width(), img.height(), policy).map_err(err)?;
                Ok(ManifestEntry {
                    name: r.name.clone(),
                    path,
                    class: r.class,
                    split: r.split,
                    bbox,
                    width: img.width(),
                    height: img.height(),
                    content_hash: Sha256::digest(&bytes).into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path, policy: BboxPolicy) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, policy)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Hash over the cache keys of the given entries, in order.
    pub(crate) fn entries_hash<'a>(entries: impl Iterator<Item = &'a ManifestEntry>) -> [u8; 32] {
        let mut h = Sha256::new();
        for e in entries {
            h.update(e.key().as_bytes());
            h.update(e.class.map_or("?".to_string(), |c| c.to_string()).as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }
}
