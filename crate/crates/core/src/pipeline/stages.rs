//! Stage runner with a fingerprinted on-disk cache.
//!
//! Every stage owns `<cache>/<stage>/`. Its `fingerprint` file records the
//! hash of the stage's config keys, its upstream fingerprints and the
//! inputs it consumes as a set. Per-image outputs are named by the entry's
//! cache key, so adding images never invalidates a per-image stage.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{PipelineConfig, EXTRACT_KEYS, HEADS_KEYS, REPORT_KEYS, SEGMENT_KEYS, TRAIN_KEYS, VOCAB_KEYS};
use super::extract::{self, Loaded, Vocabs};
use super::manifest::{Manifest, ManifestEntry, Split};
use crate::descript::{ColorNameTable, OPPONENT_SIFT_DIM};
use crate::encode::{assemble_feature, kmeans, Block, FeatureVector, Vocabulary};
use crate::error::{Error, Result};
use crate::evalrep::{evaluate, render_heatmap, report_tables, EvalReport};
use crate::headdet::{annotate, HeadBox, Provenance};
use crate::imgio::{encode_png, encode_ppm};
use crate::learn::{predict, train_ova, SvmModel};
use crate::segment::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Segment,
    Heads,
    Vocab,
    Extract,
    Train,
    Predict,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Segment,
        Stage::Heads,
        Stage::Vocab,
        Stage::Extract,
        Stage::Train,
        Stage::Predict,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Heads => "heads",
            Stage::Vocab => "vocab",
            Stage::Extract => "extract",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Segment | Stage::Heads => &[],
            Stage::Vocab => &[Stage::Segment, Stage::Heads],
            Stage::Extract => &[Stage::Segment, Stage::Heads, Stage::Vocab],
            Stage::Train => &[Stage::Extract],
            Stage::Predict => &[Stage::Train, Stage::Extract],
            Stage::Evaluate => &[Stage::Predict],
            Stage::Report => &[Stage::Evaluate, Stage::Predict],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown stage `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageSummary {
    pub stage: Stage,
    /// Units of work: images for per-image stages, files otherwise.
    pub items: usize,
    pub computed: usize,
    pub cached: usize,
    pub notes: Vec<String>,
}

impl fmt::Display for StageSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} items, {} computed, {} cached",
            self.stage, self.items, self.computed, self.cached
        )?;
        for n in &self.notes {
            write!(f, "; {n}")?;
        }
        Ok(())
    }
}

pub struct Pipeline<'a> {
    pub manifest: &'a Manifest,
    pub config: &'a PipelineConfig,
    pub cache: PathBuf,
    pub debug_images: bool,
    /// Clear a stage's directory when its fingerprint no longer matches.
    pub force: bool,
}

const MARKER: &str = "fingerprint";
const SCORES: &str = "scores.csv";

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn seed_of(global: u64, what: &str) -> u64 {
    let h = Sha256::new()
        .chain_update(global.to_le_bytes())
        .chain_update(what.as_bytes())
        .finalize();
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

fn model_file(block: Option<Block>) -> String {
    match block {
        None => "model.svml".into(),
        Some(b) => format!("model-{b}.svml"),
    }
}

fn scores_file(block: Option<Block>) -> String {
    match block {
        None => SCORES.into(),
        Some(b) => format!("scores-{b}.csv"),
    }
}

/// Rows of a feature table, in manifest order.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub splits: Vec<Split>,
    pub labels: Vec<Option<u32>>,
    pub features: Vec<FeatureVector>,
}

/// Lazily loads cached features for the entries in `splits`.
pub fn feature_rows<'m>(
    manifest: &'m Manifest,
    splits: &'m [Split],
    cache: &'m Path,
) -> impl Iterator<Item = Result<(&'m ManifestEntry, FeatureVector)>> + 'm {
    manifest.entries.iter().filter(move |e| splits.contains(&e.split)).map(move |e| {
        let path = cache.join(Stage::Extract.name()).join(format!("{}.feat", e.key()));
        if !path.exists() {
            return Err(Error::MissingArtifact { image: e.name.clone(), path });
        }
        Ok((e, FeatureVector::from_bytes(&read(&path)?)?))
    })
}

/// All rows at once; every row must share one layout.
pub fn feature_table(manifest: &Manifest, splits: &[Split], cache: &Path) -> Result<FeatureTable> {
    let mut t = FeatureTable {
        names: Vec::new(),
        splits: Vec::new(),
        labels: Vec::new(),
        features: Vec::new(),
    };
    for row in feature_rows(manifest, splits, cache) {
        let (e, f) = row?;
        if let Some(first) = t.features.first() {
            if first.layout != f.layout {
                return Err(Error::Format(format!("{}: feature layout differs from {}", e.name, t.names[0])));
            }
        }
        t.names.push(e.name.clone());
        t.splits.push(e.split);
        t.labels.push(e.class);
        t.features.push(f);
    }
    Ok(t)
}

/// Parsed `scores*.csv`.
struct ScoreTable {
    classes: Vec<u32>,
    rows: Vec<(Split, Option<u32>, Vec<f64>)>,
}

fn scores_csv(model: &SvmModel, rows: &[(&ManifestEntry, Vec<f64>, u32)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["path".to_string(), "split".into(), "truth".into(), "predicted".into()];
    header.extend(model.class_ids().iter().map(|c| format!("score_{c}")));
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(io)?;
    for (e, scores, pred) in rows {
        let mut rec = vec![
            e.name.clone(),
            e.split.to_string(),
            e.class.map_or("?".into(), |c| c.to_string()),
            pred.to_string(),
        ];
        rec.extend(scores.iter().map(|s| format!("{s:?}")));
        w.write_record(&rec).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn parse_scores(path: &Path) -> Result<ScoreTable> {
    let bad = |m: String| Error::Format(format!("{}: {m}", path.display()));
    let bytes = read(path)?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let classes = header
        .iter()
        .skip(4)
        .map(|h| h.strip_prefix("score_").and_then(|c| c.parse().ok()).ok_or_else(|| bad(format!("bad column `{h}`"))))
        .collect::<Result<Vec<u32>>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let split = match &rec[1] {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            s => return Err(bad(format!("bad split `{s}`"))),
        };
        let truth = match &rec[2] {
            "?" => None,
            s => Some(s.parse().map_err(|_| bad(format!("bad class `{s}`")))?),
        };
        let scores = rec
            .iter()
            .skip(4)
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad score `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((split, truth, scores));
    }
    Ok(ScoreTable { classes, rows })
}

fn evaluate_scores(t: &ScoreTable) -> Result<EvalReport> {
    let (scores, truths): (Vec<Vec<f64>>, Vec<u32>) = t
        .rows
        .iter()
        .filter(|r| r.0 == Split::Val)
        .filter_map(|r| r.1.map(|c| (r.2.clone(), c)))
        .unzip();
    if scores.is_empty() {
        return Err(Error::arg("manifest has no labeled validation images to evaluate"));
    }
    evaluate(&t.classes, &scores, &truths)
}

impl<'a> Pipeline<'a> {
    pub fn new(manifest: &'a Manifest, config: &'a PipelineConfig, cache: impl Into<PathBuf>) -> Self {
        Pipeline {
            manifest,
            config,
            cache: cache.into(),
            debug_images: false,
            force: false,
        }
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.cache.join(stage.name())
    }

    fn color_table(&self) -> Result<ColorNameTable> {
        match self.config.color_table.as_str() {
            "builtin" => Ok(ColorNameTable::builtin()),
            p => ColorNameTable::load(Path::new(p)),
        }
    }

    /// Hash of everything the stage's outputs depend on.
    pub fn fingerprint(&self, stage: Stage) -> Result<[u8; 32]> {
        let cfg = self.config;
        let mut h = Sha256::new();
        h.update(stage.name().as_bytes());
        let keys: &[&str] = match stage {
            Stage::Segment => SEGMENT_KEYS,
            Stage::Heads => HEADS_KEYS,
            Stage::Vocab => VOCAB_KEYS,
            Stage::Extract => EXTRACT_KEYS,
            Stage::Train => TRAIN_KEYS,
            Stage::Report => REPORT_KEYS,
            Stage::Predict | Stage::Evaluate => &[],
        };
        h.update(cfg.hash_keys(keys));
        let upstream: &[Stage] = match stage {
            Stage::Segment | Stage::Heads => &[],
            Stage::Vocab => &[Stage::Segment, Stage::Heads],
            Stage::Extract => &[Stage::Vocab],
            Stage::Train => &[Stage::Extract],
            Stage::Predict => &[Stage::Train],
            Stage::Evaluate => &[Stage::Predict],
            Stage::Report => &[Stage::Evaluate],
        };
        for &u in upstream {
            h.update(self.fingerprint(u)?);
        }
        match stage {
            Stage::Vocab | Stage::Train => h.update(Manifest::entries_hash(self.manifest.split(Split::Train))),
            Stage::Predict => h.update(Manifest::entries_hash(
                self.manifest.entries.iter().filter(|e| e.split != Split::Train),
            )),
            Stage::Extract => h.update(self.color_table()?.to_bytes()),
            _ => {}
        }
        Ok(h.finalize().into())
    }

    fn marker(&self, stage: Stage) -> Option<String> {
        std::fs::read_to_string(self.stage_dir(stage).join(MARKER))
            .ok()
            .map(|s| s.trim().to_string())
    }

    fn check_input(&self, stage: Stage, input: Stage) -> Result<()> {
        match self.marker(input) {
            None => Err(Error::MissingPrerequisite {
                stage: stage.name().into(),
                missing: input.name().into(),
            }),
            Some(m) if m != hex::encode(self.fingerprint(input)?) => Err(Error::StaleCache {
                stage: input.name().into(),
                dir: self.stage_dir(input),
            }),
            Some(_) => Ok(()),
        }
    }

    /// Checks inputs, then prepares the stage directory.
    fn open(&self, stage: Stage) -> Result<PathBuf> {
        for &input in stage.inputs() {
            self.check_input(stage, input)?;
        }
        let dir = self.stage_dir(stage);
        let fp = hex::encode(self.fingerprint(stage)?);
        match self.marker(stage) {
            Some(m) if m == fp => return Ok(dir),
            Some(_) if !self.force => {
                return Err(Error::StaleCache {
                    stage: stage.name().into(),
                    dir,
                })
            }
            Some(_) => {
                warn!("{stage}: fingerprint changed, clearing {}", dir.display());
                std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
            None => {}
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_atomic(&dir.join(MARKER), format!("{fp}\n").as_bytes())?;
        Ok(dir)
    }

    pub fn run(&self, stage: Stage) -> Result<StageSummary> {
        let dir = self.open(stage)?;
        let summary = match stage {
            Stage::Segment => self.segment(&dir),
            Stage::Heads => self.heads(&dir),
            Stage::Vocab => self.vocab(&dir),
            Stage::Extract => self.extract(&dir),
            Stage::Train => self.train(&dir),
            Stage::Predict => self.predict(&dir),
            Stage::Evaluate => self.evaluate(&dir),
            Stage::Report => self.report(&dir),
        }?;
        info!("{summary}");
        Ok(summary)
    }

    pub fn run_all(&self) -> Result<Vec<StageSummary>> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    fn debug_dir(&self) -> Result<Option<PathBuf>> {
        if !self.debug_images {
            return Ok(None);
        }
        let d = self.cache.join("debug");
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(Some(d))
    }

    /// Runs `compute` for every entry without a cached output. Outputs are
    /// pure functions of the entry, so write order does not matter.
    fn per_image(
        &self,
        stage: Stage,
        dir: &Path,
        ext: &str,
        entries: &[&ManifestEntry],
        compute: impl Fn(&ManifestEntry) -> Result<Vec<u8>> + Sync,
    ) -> Result<StageSummary> {
        let done: Vec<Result<bool>> = entries
            .par_iter()
            .map(|e| {
                let path = dir.join(format!("{}.{ext}", e.key()));
                if path.exists() {
                    return Ok(false);
                }
                let bytes = compute(e).inspect_err(|err| log::error!("{stage} failed on {}: {err}", e.name))?;
                write_atomic(&path, &bytes)?;
                Ok(true)
            })
            .collect();
        let mut computed = 0;
        for d in done {
            computed += d? as usize;
        }
        Ok(StageSummary {
            stage,
            items: entries.len(),
            computed,
            cached: entries.len() - computed,
            notes: Vec::new(),
        })
    }

    fn mask_of(&self, e: &ManifestEntry) -> Result<Mask> {
        let path = self.stage_dir(Stage::Segment).join(format!("{}.pgm", e.key()));
        if !path.exists() {
            return Err(Error::MissingArtifact { image: e.name.clone(), path });
        }
        Mask::from_pgm(&read(&path)?)
    }

    fn head_of(&self, e: &ManifestEntry) -> Result<HeadBox> {
        let path = self.stage_dir(Stage::Heads).join(format!("{}.txt", e.key()));
        if !path.exists() {
            return Err(Error::MissingArtifact { image: e.name.clone(), path });
        }
        extract::head_from_text(&String::from_utf8_lossy(&read(&path)?))
    }

    fn segment(&self, dir: &Path) -> Result<StageSummary> {
        let debug = self.debug_dir()?;
        let entries: Vec<&ManifestEntry> = self.manifest.entries.iter().collect();
        self.per_image(Stage::Segment, dir, "pgm", &entries, |e| {
            let l = extract::load(e, self.config)?;
            let mask = extract::segment(e, &l, self.config)?;
            if let Some(d) = &debug {
                write_atomic(&d.join(format!("{}-segment.ppm", e.key())), &encode_ppm(&extract::mask_overlay(&l.img, &mask)))?;
            }
            Ok(mask.to_pgm())
        })
    }

    fn heads(&self, dir: &Path) -> Result<StageSummary> {
        let debug = self.debug_dir()?;
        let entries: Vec<&ManifestEntry> = self.manifest.entries.iter().collect();
        let mut s = self.per_image(Stage::Heads, dir, "txt", &entries, |e| {
            let l = extract::load(e, self.config)?;
            let (head, det) = extract::detect_head(&l, self.config)?;
            if let (Some(d), Some(det)) = (&debug, &det) {
                let region = crate::imgio::crop(&l.img, l.bbox)?;
                let local = crate::imgio::BBox::new(head.bbox.x - l.bbox.x, head.bbox.y - l.bbox.y, head.bbox.w, head.bbox.h);
                let shown = (head.provenance == Provenance::Detected).then_some(local);
                write_atomic(&d.join(format!("{}-head.ppm", e.key())), &encode_ppm(&annotate(&region, det, shown)))?;
            }
            Ok(extract::head_to_text(&head).into_bytes())
        })?;
        let mut detected = 0;
        for e in &entries {
            detected += (self.head_of(e)?.provenance == Provenance::Detected) as usize;
        }
        let rate = if entries.is_empty() { 0.0 } else { detected as f64 / entries.len() as f64 };
        write_atomic(
            &dir.join("summary.txt"),
            format!("images={}\ndetected={detected}\nrate={rate}\n", entries.len()).as_bytes(),
        )?;
        s.notes.push(format!("head detection rate {:.1}% ({detected}/{})", 100.0 * rate, entries.len()));
        Ok(s)
    }

    /// Per-image descriptor sample for the vocabulary pools.
    fn sample_descriptors(&self, e: &ManifestEntry, per_image: usize) -> Result<(Vec<f32>, Vec<f32>)> {
        let cfg = self.config;
        let l: Loaded = extract::load(e, cfg)?;
        let (region, rmask) = extract::body_region(&l, &self.mask_of(e)?)?;
        let body = extract::body_descriptors(&region, &rmask, cfg)?;
        let head = extract::head_descriptors(&extract::head_region(&l, &self.head_of(e)?)?, cfg)?;
        let pick = |set: &crate::descript::DescriptorSet, salt: &str| {
            let mut rng = ChaCha8Rng::seed_from_u64(e.seed(cfg.seed, salt));
            let mut idx = rand::seq::index::sample(&mut rng, set.len(), per_image.min(set.len())).into_vec();
            idx.sort_unstable();
            idx.iter().flat_map(|&i| set.vector(i).iter().copied()).collect::<Vec<f32>>()
        };
        Ok((pick(&body, "vocab-body"), pick(&head, "vocab-head")))
    }

    fn vocab(&self, dir: &Path) -> Result<StageSummary> {
        let cfg = self.config;
        let (body_path, head_path) = (dir.join("body.vocb"), dir.join("head.vocb"));
        let mut summary = StageSummary {
            stage: Stage::Vocab,
            items: 2,
            computed: 0,
            cached: 0,
            notes: Vec::new(),
        };
        if body_path.exists() && head_path.exists() {
            summary.cached = 2;
            return Ok(summary);
        }
        let train: Vec<&ManifestEntry> = self.manifest.split(Split::Train).collect();
        if train.is_empty() {
            return Err(Error::arg("manifest has no training images"));
        }
        let per_image = cfg.vocab_pool.div_ceil(train.len());
        let samples = train
            .par_iter()
            .map(|e| self.sample_descriptors(e, per_image))
            .collect::<Result<Vec<_>>>()?;
        let mut pools = (Vec::new(), Vec::new());
        for (b, h) in samples {
            pools.0.extend(b);
            pools.1.extend(h);
        }
        for (pool, k, path, name) in [
            (&pools.0, cfg.vocab_body, &body_path, "body"),
            (&pools.1, cfg.vocab_head, &head_path, "head"),
        ] {
            let n = pool.len() / OPPONENT_SIFT_DIM;
            if n < k {
                return Err(Error::arg(format!(
                    "{name} vocabulary of {k} words needs at least {k} descriptors, training images gave {n}"
                )));
            }
            let out = kmeans(pool, OPPONENT_SIFT_DIM, k, seed_of(cfg.seed, name), cfg.kmeans_iters)?;
            summary.notes.push(format!(
                "{name}: {k} words from {n} descriptors, {} iterations, distortion {:.4}",
                out.iterations,
                out.distortions.last().copied().unwrap_or(0.0)
            ));
            write_atomic(path, &out.vocabulary.to_bytes())?;
            summary.computed += 1;
        }
        Ok(summary)
    }

    fn vocabs(&self) -> Result<Vocabs> {
        let dir = self.stage_dir(Stage::Vocab);
        let load = |name: &str| {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::MissingPrerequisite {
                    stage: Stage::Extract.name().into(),
                    missing: format!("vocab/{name}"),
                });
            }
            Vocabulary::from_bytes(&read(&path)?)
        };
        Ok(Vocabs {
            body: load("body.vocb")?,
            head: load("head.vocb")?,
        })
    }

    fn extract(&self, dir: &Path) -> Result<StageSummary> {
        let cfg = self.config;
        let vocabs = self.vocabs()?;
        let table = self.color_table()?;
        let schema = extract::schema(cfg, &vocabs)?;
        let kernel = cfg.kernel();
        let entries: Vec<&ManifestEntry> = self.manifest.entries.iter().collect();
        self.per_image(Stage::Extract, dir, "feat", &entries, |e| {
            let l = extract::load(e, cfg)?;
            let blocks = extract::block_histograms(&e.name, &l, &self.mask_of(e)?, &self.head_of(e)?, &vocabs, &table, cfg)?;
            Ok(assemble_feature(&schema, &blocks, &kernel)?.to_bytes())
        })
    }

    fn model_variants(&self) -> Vec<Option<Block>> {
        let mut v = vec![None];
        if self.config.ablation && self.config.blocks.len() > 1 {
            v.extend(self.config.blocks.iter().map(|&b| Some(b)));
        }
        v
    }

    fn train(&self, dir: &Path) -> Result<StageSummary> {
        let variants = self.model_variants();
        let todo: Vec<Option<Block>> = variants.iter().copied().filter(|v| !dir.join(model_file(*v)).exists()).collect();
        let mut summary = StageSummary {
            stage: Stage::Train,
            items: variants.len(),
            computed: todo.len(),
            cached: variants.len() - todo.len(),
            notes: Vec::new(),
        };
        if todo.is_empty() {
            return Ok(summary);
        }
        let table = feature_table(self.manifest, &[Split::Train], &self.cache)?;
        if table.features.is_empty() {
            return Err(Error::arg("manifest has no training images"));
        }
        let labels: Vec<u32> = table.labels.iter().map(|l| l.expect("train labels checked at ingest")).collect();
        let fp = self.fingerprint(Stage::Extract)?;
        let seed = seed_of(self.config.seed, "svm");
        for v in todo {
            let rows: Vec<&[f32]> = table
                .features
                .iter()
                .map(|f| match v {
                    None => Ok(f.values.as_slice()),
                    Some(b) => f.block(b).ok_or_else(|| Error::Format(format!("features lack block `{b}`"))),
                })
                .collect::<Result<_>>()?;
            let model = train_ova(&rows, &labels, &self.config.svm(), seed, fp)?;
            write_atomic(&dir.join(model_file(v)), &model.to_bytes())?;
            summary.notes.push(format!(
                "{}: {} classes, {} dims",
                v.map_or("combined", |b| b.name()),
                model.classes.len(),
                model.feature_len
            ));
        }
        Ok(summary)
    }

    fn load_model(&self, v: Option<Block>) -> Result<SvmModel> {
        let path = self.stage_dir(Stage::Train).join(model_file(v));
        if !path.exists() {
            return Err(Error::MissingPrerequisite {
                stage: Stage::Predict.name().into(),
                missing: format!("train/{}", model_file(v)),
            });
        }
        SvmModel::from_bytes(&read(&path)?, Some(&self.fingerprint(Stage::Extract)?))
    }

    fn predict(&self, dir: &Path) -> Result<StageSummary> {
        let variants = self.model_variants();
        let todo: Vec<Option<Block>> = variants.iter().copied().filter(|v| !dir.join(scores_file(*v)).exists()).collect();
        let summary = StageSummary {
            stage: Stage::Predict,
            items: variants.len(),
            computed: todo.len(),
            cached: variants.len() - todo.len(),
            notes: Vec::new(),
        };
        if todo.is_empty() {
            return Ok(summary);
        }
        let models = todo.iter().map(|&v| self.load_model(v)).collect::<Result<Vec<_>>>()?;
        let mut per_model: Vec<Vec<(&ManifestEntry, Vec<f64>, u32)>> = vec![Vec::new(); todo.len()];
        for row in feature_rows(self.manifest, &[Split::Val, Split::Test], &self.cache) {
            let (e, f) = row?;
            for ((v, model), out) in todo.iter().zip(&models).zip(per_model.iter_mut()) {
                let x = match v {
                    None => f.values.as_slice(),
                    Some(b) => f.block(*b).ok_or_else(|| Error::Format(format!("{}: features lack block `{b}`", e.name)))?,
                };
                let p = predict(model, x)?;
                out.push((e, p.scores, p.class));
            }
        }
        for ((v, model), rows) in todo.iter().zip(&models).zip(&per_model) {
            write_atomic(&dir.join(scores_file(*v)), &scores_csv(model, rows)?)?;
        }
        Ok(summary)
    }

    fn evaluate(&self, dir: &Path) -> Result<StageSummary> {
        let pdir = self.stage_dir(Stage::Predict);
        let mut summary = StageSummary {
            stage: Stage::Evaluate,
            items: 1,
            computed: 0,
            cached: 0,
            notes: Vec::new(),
        };
        let main = evaluate_scores(&parse_scores(&pdir.join(SCORES))?)?;
        summary.notes.push(format!("mAP {:.4}, recognition rate {:.4}", main.map, main.recognition_rate));
        if dir.join("summary.txt").exists() {
            summary.cached = 1;
            return Ok(summary);
        }
        let mut ablation = csv::Writer::from_writer(Vec::new());
        let fmt_err = |e: csv::Error| Error::Format(e.to_string());
        ablation.write_record(["model", "map", "recognition_rate"]).map_err(fmt_err)?;
        ablation
            .write_record(["combined".to_string(), main.map.to_string(), main.recognition_rate.to_string()])
            .map_err(fmt_err)?;
        for v in self.model_variants().into_iter().flatten() {
            let r = evaluate_scores(&parse_scores(&pdir.join(scores_file(Some(v))))?)?;
            ablation
                .write_record([v.name().to_string(), r.map.to_string(), r.recognition_rate.to_string()])
                .map_err(fmt_err)?;
            summary.notes.push(format!("{v} alone: mAP {:.4}", r.map));
        }
        write_atomic(&dir.join("ablation.csv"), &ablation.into_inner().map_err(|e| Error::Format(e.to_string()))?)?;
        write_atomic(&dir.join("confusion.csv"), main.confusion_csv().as_bytes())?;
        write_atomic(&dir.join("summary.txt"), main.summary().as_bytes())?;
        summary.computed = 1;
        Ok(summary)
    }

    fn report(&self, dir: &Path) -> Result<StageSummary> {
        let names = ["top.csv", "bottom.csv", "confused.csv", "heatmap.ppm", "heatmap.png"];
        let mut summary = StageSummary {
            stage: Stage::Report,
            items: names.len(),
            computed: 0,
            cached: 0,
            notes: Vec::new(),
        };
        if names.iter().all(|n| dir.join(n).exists()) {
            summary.cached = names.len();
            return Ok(summary);
        }
        let r = evaluate_scores(&parse_scores(&self.stage_dir(Stage::Predict).join(SCORES))?)?;
        let t = report_tables(&r, self.config.report_k);
        let heat = render_heatmap(&r.confusion, self.config.heatmap_size);
        write_atomic(&dir.join("top.csv"), t.top.as_bytes())?;
        write_atomic(&dir.join("bottom.csv"), t.bottom.as_bytes())?;
        write_atomic(&dir.join("confused.csv"), t.confused.as_bytes())?;
        write_atomic(&dir.join("heatmap.ppm"), &encode_ppm(&heat))?;
        write_atomic(&dir.join("heatmap.png"), &encode_png(&heat)?)?;
        summary.computed = names.len();
        Ok(summary)
    }
}
