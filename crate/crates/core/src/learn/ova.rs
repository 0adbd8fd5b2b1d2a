//! One-vs-all training, scoring, and the `SVML` model file.

use std::io::{Cursor, Read};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::dcd::{train_binary, SvmParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SVML";

#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub class: u32,
    pub bias: f64,
    pub weights: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub c: f64,
    pub feature_len: usize,
    pub classes: Vec<ClassModel>,
    pub fingerprint: [u8; 32],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub class: u32,
}

fn class_seed(seed: u64, class: u32) -> u64 {
    let h = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(class.to_le_bytes())
        .finalize();
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

fn row_key(x: &[f32], label: u32) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in x {
        h.update(v.to_le_bytes());
    }
    h.update(label.to_le_bytes());
    h.finalize().into()
}

/// Trains one binary SVM per class. Examples are put in a canonical
/// content order first, so permuting the input leaves the model unchanged.
pub fn train_ova(
    features: &[&[f32]],
    labels: &[u32],
    params: &SvmParams,
    seed: u64,
    fingerprint: [u8; 32],
) -> Result<SvmModel> {
    if features.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::arg(format!(
            "one-vs-all needs at least two classes, got {:?}",
            classes
        )));
    }
    let mut order: Vec<(usize, [u8; 32])> = features
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(i, (x, &y))| (i, row_key(x, y)))
        .collect();
    order.sort_by_key(|a| a.1);
    let rows: Vec<&[f32]> = order.iter().map(|&(i, _)| features[i]).collect();
    let ys: Vec<u32> = order.iter().map(|&(i, _)| labels[i]).collect();
    let feature_len = rows[0].len();

    let trained: Vec<Result<ClassModel>> = classes
        .par_iter()
        .map(|&class| {
            let bin: Vec<i8> = ys.iter().map(|&y| if y == class { 1 } else { -1 }).collect();
            let m = train_binary(&rows, &bin, params, class_seed(seed, class))?;
            if !m.converged {
                log::warn!("class {class}: solver stopped at {} epochs before reaching tolerance", m.epochs);
            }
            Ok(ClassModel {
                class,
                bias: m.bias,
                weights: m.weights.iter().map(|&w| w as f32).collect(),
            })
        })
        .collect();
    Ok(SvmModel {
        c: params.c,
        feature_len,
        classes: trained.into_iter().collect::<Result<_>>()?,
        fingerprint,
    })
}

#[inline]
fn dot32(w: &[f32], x: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += w[c * 4 + l] as f64 * x[c * 4 + l] as f64;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..x.len() {
        tail += w[i] as f64 * x[i] as f64;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

impl SvmModel {
    pub fn class_ids(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.class).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(52 + self.classes.len() * (12 + 4 * self.feature_len));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.classes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.feature_len as u32).to_le_bytes());
        out.extend_from_slice(&self.c.to_le_bytes());
        for cm in &self.classes {
            out.extend_from_slice(&cm.class.to_le_bytes());
            out.extend_from_slice(&cm.bias.to_le_bytes());
            for w in &cm.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.fingerprint);
        out
    }

    /// Parses a model file; with `expected` set, the stored fingerprint must
    /// match it.
    pub fn from_bytes(bytes: &[u8], expected: Option<&[u8; 32]>) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        fill(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("model file lacks SVML magic".into()));
        }
        let k = u32::from_le_bytes(array(&mut r)?) as usize;
        let feature_len = u32::from_le_bytes(array(&mut r)?) as usize;
        let c = f64::from_le_bytes(array(&mut r)?);
        let need = 20usize
            .checked_add(k.saturating_mul(12 + 4 * feature_len))
            .and_then(|v| v.checked_add(32));
        if need != Some(bytes.len()) {
            return Err(Error::Format(format!("model file has {} bytes, header implies {:?}", bytes.len(), need)));
        }
        let mut classes = Vec::with_capacity(k);
        for _ in 0..k {
            let class = u32::from_le_bytes(array(&mut r)?);
            let bias = f64::from_le_bytes(array(&mut r)?);
            let start = r.position() as usize;
            let weights = bytes[start..start + 4 * feature_len]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            r.set_position((start + 4 * feature_len) as u64);
            classes.push(ClassModel { class, bias, weights });
        }
        if classes.windows(2).any(|w| w[0].class >= w[1].class) {
            return Err(Error::Format("model classes are not unique and sorted".into()));
        }
        let fingerprint: [u8; 32] = array(&mut r)?;
        if let Some(exp) = expected {
            if exp != &fingerprint {
                return Err(Error::ConfigMismatch {
                    expected: hex::encode(fingerprint),
                    found: hex::encode(exp),
                });
            }
        }
        Ok(SvmModel {
            c,
            feature_len,
            classes,
            fingerprint,
        })
    }
}

fn fill(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("model file truncated at byte {}", r.position())))
}

fn array<const N: usize>(r: &mut Cursor<&[u8]>) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    fill(r, &mut b)?;
    Ok(b)
}

/// Per-class scores w·x + b, argmax with ties to the lowest class id.
pub fn predict(model: &SvmModel, feature: &[f32]) -> Result<Prediction> {
    if feature.len() != model.feature_len {
        return Err(Error::arg(format!(
            "feature length {} does not match model length {}",
            feature.len(),
            model.feature_len
        )));
    }
    let scores: Vec<f64> = model.classes.iter().map(|c| dot32(&c.weights, feature) + c.bias).collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(Prediction {
        class: model.classes[best].class,
        scores,
    })
}
