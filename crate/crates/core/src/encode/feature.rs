//! Fixed-order block concatenation and the `FEAT` cache format.

use std::fmt;
use std::io::{Cursor, Read};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{hkm_expand_into, KernelMapSpec};

const MAGIC: &[u8; 4] = b"FEAT";

/// Feature families, in concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    SiftBody,
    ColorNames,
    LbpS1,
    LbpS2,
    LbpS4,
    SiftHead,
}

impl Block {
    pub const ALL: [Block; 6] = [
        Block::SiftBody,
        Block::ColorNames,
        Block::LbpS1,
        Block::LbpS2,
        Block::LbpS4,
        Block::SiftHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::SiftBody => "sift-body",
            Block::ColorNames => "color-names",
            Block::LbpS1 => "lbp-s1",
            Block::LbpS2 => "lbp-s2",
            Block::LbpS4 => "lbp-s4",
            Block::SiftHead => "sift-head",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Block::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature block `{s}`")))
    }
}

/// One entry of a feature layout, offsets in post-expansion units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub layout: Vec<LayoutEntry>,
    pub values: Vec<f32>,
}

/// Expected blocks and their pre-expansion lengths, in concatenation order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    blocks: Vec<(Block, usize)>,
}

impl FeatureSchema {
    pub fn new(mut blocks: Vec<(Block, usize)>) -> Result<Self> {
        blocks.sort_by_key(|b| b.0);
        if blocks.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::arg("feature schema lists a block twice"));
        }
        if blocks.is_empty() {
            return Err(Error::arg("feature schema has no blocks"));
        }
        Ok(FeatureSchema { blocks })
    }

    pub fn blocks(&self) -> &[(Block, usize)] {
        &self.blocks
    }

    pub fn input_len(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn layout(&self, kernel: &KernelMapSpec) -> Vec<LayoutEntry> {
        let mut offset = 0;
        self.blocks
            .iter()
            .map(|&(b, n)| {
                let len = n * kernel.expansion();
                let e = LayoutEntry { name: b.name().to_string(), offset, len };
                offset += len;
                e
            })
            .collect()
    }

    pub fn output_len(&self, kernel: &KernelMapSpec) -> usize {
        self.input_len() * kernel.expansion()
    }
}

/// Kernel-maps each block and concatenates in schema order. Blocks not in
/// the schema are ignored.
pub fn assemble_feature(schema: &FeatureSchema, blocks: &[(Block, Vec<f64>)], kernel: &KernelMapSpec) -> Result<FeatureVector> {
    let mut expanded = Vec::with_capacity(schema.output_len(kernel));
    for &(block, len) in schema.blocks() {
        let hist = blocks
            .iter()
            .find(|b| b.0 == block)
            .ok_or_else(|| Error::arg(format!("feature block `{block}` is missing")))?;
        if hist.1.len() != len {
            return Err(Error::arg(format!(
                "feature block `{block}` has length {}, expected {len}",
                hist.1.len()
            )));
        }
        hkm_expand_into(&hist.1, kernel, &mut expanded)?;
    }
    Ok(FeatureVector {
        layout: schema.layout(kernel),
        values: expanded.into_iter().map(|v| v as f32).collect(),
    })
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values of one block, if present in the layout.
    pub fn block(&self, block: Block) -> Option<&[f32]> {
        self.layout
            .iter()
            .find(|e| e.name == block.name())
            .map(|e| &self.values[e.offset..e.offset + e.len])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.layout.len() * 24 + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.layout.len() as u32).to_le_bytes());
        for e in &self.layout {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.offset as u32).to_le_bytes());
            out.extend_from_slice(&(e.len as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        take(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("feature file lacks FEAT magic".into()));
        }
        let n = u32_at(&mut r)? as usize;
        let mut layout = Vec::with_capacity(n.min(64));
        let mut expect = 0;
        for _ in 0..n {
            let name_len = u32_at(&mut r)? as usize;
            if name_len > 256 {
                return Err(Error::Format("feature block name too long".into()));
            }
            let mut name = vec![0u8; name_len];
            take(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("block name is not UTF-8".into()))?;
            let offset = u32_at(&mut r)? as usize;
            let len = u32_at(&mut r)? as usize;
            if offset != expect {
                return Err(Error::Format(format!("block `{name}` at offset {offset}, expected {expect}")));
            }
            expect += len;
            layout.push(LayoutEntry { name, offset, len });
        }
        let total = u32_at(&mut r)? as usize;
        if total != expect {
            return Err(Error::Format(format!("feature length {total} disagrees with layout {expect}")));
        }
        let start = r.position() as usize;
        if bytes.len() - start != total * 4 {
            return Err(Error::Format(format!(
                "feature payload is {} bytes, expected {}",
                bytes.len() - start,
                total * 4
            )));
        }
        let values = bytes[start..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(FeatureVector { layout, values })
    }
}

fn take(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("feature file truncated at byte {}", r.position())))
}

fn u32_at(r: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    take(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descript::{LBP_BINS, N_COLOR_NAMES};
    use crate::encode::PyramidSpec;

    fn default_schema() -> FeatureSchema {
        let p3 = PyramidSpec::new(3).unwrap();
        let p5 = PyramidSpec::new(5).unwrap();
        FeatureSchema::new(vec![
            (Block::SiftHead, p3.output_len(500)),
            (Block::SiftBody, p3.output_len(1000)),
            (Block::ColorNames, p5.output_len(N_COLOR_NAMES)),
            (Block::LbpS1, p3.output_len(LBP_BINS)),
            (Block::LbpS2, p3.output_len(LBP_BINS)),
            (Block::LbpS4, p3.output_len(LBP_BINS)),
        ])
        .unwrap()
    }

    fn zero_blocks(schema: &FeatureSchema) -> Vec<(Block, Vec<f64>)> {
        schema.blocks().iter().map(|&(b, n)| (b, vec![0.0; n])).collect()
    }

    #[test]
    fn default_dimensions() {
        let s = default_schema();
        assert_eq!(s.input_len(), 21000 + 3751 + 630 + 10500);
        assert_eq!(s.input_len(), 35881);
        assert_eq!(s.output_len(&KernelMapSpec::default()), 107643);
    }

    #[test]
    fn zero_blocks_give_zero_vector_and_gap_free_layout() {
        let s = default_schema();
        let f = assemble_feature(&s, &zero_blocks(&s), &KernelMapSpec::default()).unwrap();
        assert_eq!(f.len(), 107643);
        assert!(f.values.iter().all(|&v| v == 0.0));
        let names: Vec<&str> = f.layout.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["sift-body", "color-names", "lbp-s1", "lbp-s2", "lbp-s4", "sift-head"]);
        let mut end = 0;
        for e in &f.layout {
            assert_eq!(e.offset, end);
            assert!(e.len > 0);
            end += e.len;
        }
        assert_eq!(end, f.len());
    }

    #[test]
    fn missing_block_named() {
        let s = default_schema();
        let mut blocks = zero_blocks(&s);
        blocks.retain(|b| b.0 != Block::LbpS2);
        match assemble_feature(&s, &blocks, &KernelMapSpec::default()) {
            Err(Error::Argument(m)) => assert!(m.contains("lbp-s2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn feat_roundtrip_and_corruption() {
        let s = FeatureSchema::new(vec![(Block::LbpS1, 2), (Block::ColorNames, 1)]).unwrap();
        let f = assemble_feature(
            &s,
            &[(Block::LbpS1, vec![0.25, 0.75]), (Block::ColorNames, vec![1.0])],
            &KernelMapSpec::default(),
        )
        .unwrap();
        assert_eq!(f.layout[0].name, "color-names");
        let bytes = f.to_bytes();
        assert_eq!(FeatureVector::from_bytes(&bytes).unwrap(), f);
        assert!(matches!(FeatureVector::from_bytes(&bytes[..bytes.len() - 2]), Err(Error::Format(_))));
        assert!(matches!(FeatureVector::from_bytes(b"FEAX"), Err(Error::Format(_))));
        assert_eq!(f.block(Block::LbpS1).unwrap(), &f.values[3..]);
        assert!(f.block(Block::SiftHead).is_none());
    }

    #[test]
    fn block_names_parse() {
        for b in Block::ALL {
            assert_eq!(b.name().parse::<Block>().unwrap(), b);
        }
        assert!("hog".parse::<Block>().is_err());
    }
}
