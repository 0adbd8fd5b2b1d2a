//! Flat `key=value` pipeline configuration.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::encode::{Block, KernelMapSpec, KernelWindow, PyramidSpec};
use crate::error::{Error, Result};
use crate::headdet::HoughParams;
use crate::learn::SvmParams;
use crate::segment::GrabCutParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BboxPolicy {
    #[default]
    Reject,
    Clip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Longest image side after loading; 0 keeps images as they are.
    pub max_dim: usize,
    pub bbox_policy: BboxPolicy,

    pub grabcut_iterations: usize,
    pub grabcut_components: usize,
    pub grabcut_lambda: f64,

    pub hough_r_min_frac: f64,
    pub hough_r_max_frac: f64,
    pub hough_mag_threshold: f64,
    pub hough_peak_threshold: f64,
    pub hough_min_score: f64,
    pub head_margin: f64,

    pub sift_patch: usize,
    pub sift_step_body: usize,
    pub sift_step_head: usize,

    pub vocab_body: usize,
    pub vocab_head: usize,
    pub vocab_pool: usize,
    pub kmeans_iters: usize,

    pub pyramid_levels: usize,
    pub pyramid_levels_color: usize,

    pub kernel_order: usize,
    pub kernel_period: f64,
    pub kernel_gamma: f64,
    pub kernel_window: KernelWindow,

    pub svm_c: f64,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    pub svm_pos_weight: f64,

    pub blocks: Vec<Block>,
    /// Also train and score one model per single block.
    pub ablation: bool,
    pub report_k: usize,
    pub heatmap_size: usize,
    /// Path of a color-name table, or `builtin`.
    pub color_table: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            max_dim: 0,
            bbox_policy: BboxPolicy::Reject,
            grabcut_iterations: 5,
            grabcut_components: 5,
            grabcut_lambda: 50.0,
            hough_r_min_frac: 0.01,
            hough_r_max_frac: 0.08,
            hough_mag_threshold: 300.0,
            hough_peak_threshold: 0.3,
            hough_min_score: 0.35,
            head_margin: 3.0,
            sift_patch: 16,
            sift_step_body: 4,
            sift_step_head: 2,
            vocab_body: 1000,
            vocab_head: 500,
            vocab_pool: 200_000,
            kmeans_iters: 100,
            pyramid_levels: 3,
            pyramid_levels_color: 5,
            kernel_order: 1,
            kernel_period: 0.65,
            kernel_gamma: 0.5,
            kernel_window: KernelWindow::Rectangular,
            svm_c: 10.0,
            svm_tol: 1e-3,
            svm_max_iter: 1000,
            svm_pos_weight: 1.0,
            blocks: Block::ALL.to_vec(),
            ablation: true,
            report_k: 5,
            heatmap_size: 480,
            color_table: "builtin".into(),
        }
    }
}

/// Keys each stage depends on directly.
pub(crate) const SEGMENT_KEYS: &[&str] = &["max_dim", "bbox_policy", "seed", "grabcut_iterations", "grabcut_components", "grabcut_lambda"];
pub(crate) const HEADS_KEYS: &[&str] = &[
    "max_dim",
    "bbox_policy",
    "hough_r_min_frac",
    "hough_r_max_frac",
    "hough_mag_threshold",
    "hough_peak_threshold",
    "hough_min_score",
    "head_margin",
];
pub(crate) const VOCAB_KEYS: &[&str] = &[
    "seed",
    "sift_patch",
    "sift_step_body",
    "sift_step_head",
    "vocab_body",
    "vocab_head",
    "vocab_pool",
    "kmeans_iters",
];
pub(crate) const EXTRACT_KEYS: &[&str] = &[
    "pyramid_levels",
    "pyramid_levels_color",
    "kernel_order",
    "kernel_period",
    "kernel_gamma",
    "kernel_window",
    "blocks",
    "color_table",
];
pub(crate) const TRAIN_KEYS: &[&str] = &["seed", "svm_c", "svm_tol", "svm_max_iter", "svm_pos_weight", "ablation"];
pub(crate) const REPORT_KEYS: &[&str] = &["report_k", "heatmap_size"];

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

impl PipelineConfig {
    /// Every field as canonical `key=value` pairs, sorted by key.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        let f = |v: f64| format!("{v:?}");
        m.insert("seed", self.seed.to_string());
        m.insert("max_dim", self.max_dim.to_string());
        m.insert(
            "bbox_policy",
            match self.bbox_policy {
                BboxPolicy::Reject => "reject".into(),
                BboxPolicy::Clip => "clip".into(),
            },
        );
        m.insert("grabcut_iterations", self.grabcut_iterations.to_string());
        m.insert("grabcut_components", self.grabcut_components.to_string());
        m.insert("grabcut_lambda", f(self.grabcut_lambda));
        m.insert("hough_r_min_frac", f(self.hough_r_min_frac));
        m.insert("hough_r_max_frac", f(self.hough_r_max_frac));
        m.insert("hough_mag_threshold", f(self.hough_mag_threshold));
        m.insert("hough_peak_threshold", f(self.hough_peak_threshold));
        m.insert("hough_min_score", f(self.hough_min_score));
        m.insert("head_margin", f(self.head_margin));
        m.insert("sift_patch", self.sift_patch.to_string());
        m.insert("sift_step_body", self.sift_step_body.to_string());
        m.insert("sift_step_head", self.sift_step_head.to_string());
        m.insert("vocab_body", self.vocab_body.to_string());
        m.insert("vocab_head", self.vocab_head.to_string());
        m.insert("vocab_pool", self.vocab_pool.to_string());
        m.insert("kmeans_iters", self.kmeans_iters.to_string());
        m.insert("pyramid_levels", self.pyramid_levels.to_string());
        m.insert("pyramid_levels_color", self.pyramid_levels_color.to_string());
        m.insert("kernel_order", self.kernel_order.to_string());
        m.insert("kernel_period", f(self.kernel_period));
        m.insert("kernel_gamma", f(self.kernel_gamma));
        m.insert("kernel_window", self.kernel_window.name().into());
        m.insert("svm_c", f(self.svm_c));
        m.insert("svm_tol", f(self.svm_tol));
        m.insert("svm_max_iter", self.svm_max_iter.to_string());
        m.insert("svm_pos_weight", f(self.svm_pos_weight));
        m.insert("blocks", self.blocks.iter().map(|b| b.name()).collect::<Vec<_>>().join(","));
        m.insert("ablation", self.ablation.to_string());
        m.insert("report_k", self.report_k.to_string());
        m.insert("heatmap_size", self.heatmap_size.to_string());
        m.insert("color_table", self.color_table.clone());
        m
    }

    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Parses `key=value` lines; `#` starts a comment. Keys not present
    /// keep their defaults, unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = PipelineConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: `{k}` set twice", n + 1)));
            }
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<()> {
        match k {
            "seed" => self.seed = parse(k, v)?,
            "max_dim" => self.max_dim = parse(k, v)?,
            "bbox_policy" => {
                self.bbox_policy = match v {
                    "reject" => BboxPolicy::Reject,
                    "clip" => BboxPolicy::Clip,
                    _ => return Err(Error::Config(format!("`bbox_policy` must be reject or clip, got `{v}`"))),
                }
            }
            "grabcut_iterations" => self.grabcut_iterations = parse(k, v)?,
            "grabcut_components" => self.grabcut_components = parse(k, v)?,
            "grabcut_lambda" => self.grabcut_lambda = parse(k, v)?,
            "hough_r_min_frac" => self.hough_r_min_frac = parse(k, v)?,
            "hough_r_max_frac" => self.hough_r_max_frac = parse(k, v)?,
            "hough_mag_threshold" => self.hough_mag_threshold = parse(k, v)?,
            "hough_peak_threshold" => self.hough_peak_threshold = parse(k, v)?,
            "hough_min_score" => self.hough_min_score = parse(k, v)?,
            "head_margin" => self.head_margin = parse(k, v)?,
            "sift_patch" => self.sift_patch = parse(k, v)?,
            "sift_step_body" => self.sift_step_body = parse(k, v)?,
            "sift_step_head" => self.sift_step_head = parse(k, v)?,
            "vocab_body" => self.vocab_body = parse(k, v)?,
            "vocab_head" => self.vocab_head = parse(k, v)?,
            "vocab_pool" => self.vocab_pool = parse(k, v)?,
            "kmeans_iters" => self.kmeans_iters = parse(k, v)?,
            "pyramid_levels" => self.pyramid_levels = parse(k, v)?,
            "pyramid_levels_color" => self.pyramid_levels_color = parse(k, v)?,
            "kernel_order" => self.kernel_order = parse(k, v)?,
            "kernel_period" => self.kernel_period = parse(k, v)?,
            "kernel_gamma" => self.kernel_gamma = parse(k, v)?,
            "kernel_window" => self.kernel_window = KernelWindow::parse(v)?,
            "svm_c" => self.svm_c = parse(k, v)?,
            "svm_tol" => self.svm_tol = parse(k, v)?,
            "svm_max_iter" => self.svm_max_iter = parse(k, v)?,
            "svm_pos_weight" => self.svm_pos_weight = parse(k, v)?,
            "blocks" => {
                self.blocks = v
                    .split(',')
                    .map(|s| s.trim().parse::<Block>())
                    .collect::<Result<Vec<_>>>()?;
                self.blocks.sort();
            }
            "ablation" => self.ablation = parse(k, v)?,
            "report_k" => self.report_k = parse(k, v)?,
            "heatmap_size" => self.heatmap_size = parse(k, v)?,
            "color_table" => self.color_table = v.to_string(),
            _ => return Err(Error::Config(format!("unknown key `{k}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grabcut_iterations == 0 || self.grabcut_components == 0 || !(self.grabcut_lambda >= 0.0) {
            return bad("grabcut iterations and components must be >= 1, lambda >= 0".into());
        }
        if self.sift_patch < 8 || !self.sift_patch.is_multiple_of(4) || self.sift_step_body == 0 || self.sift_step_head == 0 {
            return bad(format!("invalid SIFT geometry: patch {} steps {}/{}", self.sift_patch, self.sift_step_body, self.sift_step_head));
        }
        if self.vocab_body == 0 || self.vocab_head == 0 || self.vocab_pool == 0 {
            return bad("vocabulary sizes and pool must be positive".into());
        }
        PyramidSpec::new(self.pyramid_levels).map_err(|e| Error::Config(e.to_string()))?;
        PyramidSpec::new(self.pyramid_levels_color).map_err(|e| Error::Config(e.to_string()))?;
        self.kernel().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.svm_c > 0.0 && self.svm_tol > 0.0 && self.svm_pos_weight > 0.0) || self.svm_max_iter == 0 {
            return bad("SVM C, tolerance, positive weight and max iterations must be positive".into());
        }
        if self.blocks.is_empty() {
            return bad("at least one feature block is required".into());
        }
        if !(self.hough_r_min_frac > 0.0 && self.hough_r_max_frac >= self.hough_r_min_frac) {
            return bad("hough radius fractions must satisfy 0 < min <= max".into());
        }
        if !(self.head_margin > 0.0) {
            return bad("head_margin must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical text of the given keys.
    pub(crate) fn hash_keys(&self, keys: &[&str]) -> [u8; 32] {
        let all = self.entries();
        let mut h = Sha256::new();
        for k in keys {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(all[k].as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    pub fn grabcut(&self, seed: u64) -> GrabCutParams {
        GrabCutParams {
            iterations: self.grabcut_iterations,
            components: self.grabcut_components,
            lambda: self.grabcut_lambda,
            seed,
        }
    }

    pub fn hough(&self, width: usize, height: usize) -> HoughParams {
        let side = width.min(height) as f64;
        let r_min = (self.hough_r_min_frac * side).round().max(2.0) as usize;
        let r_max = ((self.hough_r_max_frac * side).round() as usize).max(r_min);
        HoughParams {
            r_min,
            r_max,
            mag_threshold: self.hough_mag_threshold,
            peak_threshold: self.hough_peak_threshold,
            min_score: self.hough_min_score,
            nms_radius: (r_max as f64 / 2.0).max(3.0),
        }
    }

    pub fn kernel(&self) -> KernelMapSpec {
        KernelMapSpec {
            order: self.kernel_order,
            period: self.kernel_period,
            gamma: self.kernel_gamma,
            window: self.kernel_window,
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
            pos_weight: self.svm_pos_weight,
        }
    }
}
