//! Config-driven curation run: stages execute in the configured order over
//! an in-memory corpus, every inspected document gets one mark per stage,
//! and the run writes kept/dropped JSONL plus a deterministic JSON report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{read_all, write_jsonl, Document, Stage, StageMark, Verdict};
use crate::dedup::{find_near_duplicates, Cluster, DedupConfig, ShingleUnit};
use crate::error::{Error, Result};
use crate::filter::{content_filter, quality_filter, repetition_filter, ContentRules, QualityConfig, RepetitionConfig};
use crate::lm::ngram::{NGramModel, Smoothing};
use crate::lm::tokenizer::{Tokenizer, TokenizerSpec};
use crate::lm::{calibrate_cutoff, ppl_filter, train_ngram, PplFilterReport};
use crate::normalize::{s2t_convert, strip_timestamps, to_fullwidth_punct, transform_doc, ConversionDict, PunctMap, TimestampRules};
use crate::par;
use crate::segment::SegmenterKind;

pub const ALL_SOURCES: &str = "*";

pub fn default_stages() -> Vec<Stage> {
    vec![
        Stage::Content,
        Stage::Extract,
        Stage::Dedup,
        Stage::Quality,
        Stage::Ppl,
        Stage::Repetition,
        Stage::Punct,
        Stage::S2t,
    ]
}

fn sources(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn in_scope(scope: &[String], source: &str) -> bool {
    scope.iter().any(|s| s == ALL_SOURCES || s == source)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractStage {
    pub sources: Vec<String>,
    /// Regular expressions removed from text; the built-in list when absent.
    pub patterns: Option<Vec<String>>,
}

impl Default for ExtractStage {
    fn default() -> Self {
        ExtractStage {
            sources: sources(&["gigaword5-cna"]),
            patterns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupStage {
    pub sources: Vec<String>,
    pub threshold: f64,
    pub k: usize,
    pub bands: usize,
    pub rows: usize,
    pub unit: ShingleUnit,
    pub segmenter: SegmenterKind,
    /// Remove all but the lowest id of each cluster. Off: report only.
    pub drop: bool,
}

impl Default for DedupStage {
    fn default() -> Self {
        let d = DedupConfig::default();
        DedupStage {
            sources: sources(&[ALL_SOURCES]),
            threshold: d.threshold,
            k: d.k,
            bands: d.bands,
            rows: d.rows,
            unit: d.unit,
            segmenter: SegmenterKind::Bigram,
            drop: false,
        }
    }
}

impl DedupStage {
    fn config(&self, seed: u64) -> DedupConfig {
        DedupConfig {
            threshold: self.threshold,
            k: self.k,
            bands: self.bands,
            rows: self.rows,
            seed,
            unit: self.unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityStage {
    pub sources: Vec<String>,
    pub min_chinese_chars: usize,
    pub max_symbol_ratio: f64,
}

impl Default for QualityStage {
    fn default() -> Self {
        let q = QualityConfig::default();
        QualityStage {
            sources: sources(&["gigaword5-cna", "asbc"]),
            min_chinese_chars: q.min_chinese_chars,
            max_symbol_ratio: q.max_symbol_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PplTrain {
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub smoothing: Smoothing,
}

fn default_order() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PplStage {
    pub sources: Vec<String>,
    /// Saved n-gram model (JSON count dump).
    pub model: Option<PathBuf>,
    /// Or train one at startup.
    pub train: Option<PplTrain>,
    pub cutoff: Option<f64>,
    /// Calibrate the cutoff to remove this fraction of in-scope tokens.
    pub target_fraction: Option<f64>,
    /// Tokenizer for scoring; the pipeline tokenizer when absent.
    pub tokenizer: Option<TokenizerSpec>,
}

impl Default for PplStage {
    fn default() -> Self {
        PplStage {
            sources: sources(&["cc100-zht"]),
            model: None,
            train: None,
            cutoff: None,
            target_fraction: None,
            tokenizer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PunctStage {
    pub sources: Vec<String>,
    /// TSV map; the shipped halfwidth table when absent.
    pub map: Option<PathBuf>,
}

impl Default for PunctStage {
    fn default() -> Self {
        PunctStage {
            sources: sources(&["gigaword5-cna"]),
            map: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct S2tStage {
    pub sources: Vec<String>,
    /// TSV dictionary; the shipped sample dictionary when absent.
    pub dict: Option<PathBuf>,
}

impl Default for S2tStage {
    fn default() -> Self {
        S2tStage {
            sources: sources(&["xp3-zht"]),
            dict: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    /// Worker threads; not part of the config hash.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    /// Tokenizer for the token columns of the report.
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    #[serde(default)]
    pub content: ContentRules,
    #[serde(default)]
    pub extract: ExtractStage,
    #[serde(default)]
    pub dedup: DedupStage,
    #[serde(default)]
    pub quality: QualityStage,
    #[serde(default)]
    pub ppl: PplStage,
    #[serde(default)]
    pub repetition: RepetitionConfig,
    #[serde(default)]
    pub punct: PunctStage,
    #[serde(default)]
    pub s2t: S2tStage,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("pipeline config: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("pipeline config: {e}")))
    }

    /// Reads TOML (or JSON for `.json`) and resolves relative paths against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            PipelineConfig::from_json(&text)?
        } else {
            PipelineConfig::from_toml(&text)?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inputs.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
        if let Some(p) = self.ppl.model.as_mut() {
            fix(p);
        }
        if let Some(t) = self.ppl.train.as_mut() {
            t.inputs.iter_mut().for_each(fix);
        }
        if let Some(p) = self.punct.map.as_mut() {
            fix(p);
        }
        if let Some(p) = self.s2t.dict.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.stages {
            if *s == Stage::Mixture {
                return Err(Error::config("mixture is not a pipeline stage; use the mix command"));
            }
            if !seen.insert(*s) {
                return Err(Error::config(format!("stage {s} listed twice")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.inputs.is_empty() {
            return Err(Error::config("no input files"));
        }
        if seen.contains(&Stage::Dedup) {
            self.dedup.config(self.seed).validate()?;
        }
        if seen.contains(&Stage::Quality) {
            self.quality_config().validate()?;
        }
        if seen.contains(&Stage::Repetition) {
            self.repetition.thresholds.validate_as_thresholds()?;
        }
        if seen.contains(&Stage::Ppl) {
            let p = &self.ppl;
            if p.model.is_some() == p.train.is_some() {
                return Err(Error::config("ppl stage needs exactly one of `model` or `train`"));
            }
            match (p.cutoff, p.target_fraction) {
                (Some(c), None) if c > 0.0 => {}
                (None, Some(t)) if (0.0..=1.0).contains(&t) => {}
                _ => {
                    return Err(Error::config(
                        "ppl stage needs exactly one of a positive `cutoff` or a `target_fraction` in [0, 1]",
                    ))
                }
            }
        }
        Ok(())
    }

    fn quality_config(&self) -> QualityConfig {
        QualityConfig {
            min_chinese_chars: self.quality.min_chinese_chars,
            max_symbol_ratio: self.quality.max_symbol_ratio,
        }
    }

    /// SHA-256 of the canonical JSON form, leaving out `workers` and `output_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("workers");
            obj.remove("output_dir");
        }
        let canonical = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Loaded resources, built before any document is touched so configuration
/// errors surface up front.
pub struct Prepared {
    tokenizer: Arc<dyn Tokenizer>,
    timestamps: TimestampRules,
    punct: PunctMap,
    dict: ConversionDict,
    ppl: Option<(Arc<NGramModel>, Arc<dyn Tokenizer>)>,
}

impl Prepared {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let uses = |s: Stage| cfg.stages.contains(&s);
        let tokenizer = cfg.tokenizer.build()?;
        let timestamps = match &cfg.extract.patterns {
            Some(p) => TimestampRules::new(p)?,
            None => TimestampRules::default(),
        };
        let punct = match (&cfg.punct.map, uses(Stage::Punct)) {
            (Some(p), true) => PunctMap::load(p)?,
            _ => PunctMap::default(),
        };
        let dict = match (&cfg.s2t.dict, uses(Stage::S2t)) {
            (Some(p), true) => ConversionDict::load(p)?,
            _ => ConversionDict::shipped(),
        };
        let ppl = if uses(Stage::Ppl) {
            let tok = match &cfg.ppl.tokenizer {
                Some(spec) => spec.build()?,
                None => tokenizer.clone(),
            };
            let model = match (&cfg.ppl.model, &cfg.ppl.train) {
                (Some(path), _) => NGramModel::load(path)?,
                (None, Some(t)) => {
                    let mut texts = Vec::new();
                    for p in &t.inputs {
                        texts.extend(read_all(p)?.into_iter().map(|d| d.text));
                    }
                    train_ngram(texts.iter().map(String::as_str), tok.as_ref(), t.order, t.smoothing)?
                }
                (None, None) => unreachable!("validated"),
            };
            Some((Arc::new(model), tok))
        } else {
            None
        };
        Ok(Prepared {
            tokenizer,
            timestamps,
            punct,
            dict,
            ppl,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Option<Stage>,
    pub input_docs: usize,
    pub kept: usize,
    pub dropped: usize,
    /// Kept documents whose text changed.
    pub transformed: usize,
    /// Kept documents outside the stage's source scope.
    pub skipped: usize,
    pub dropped_by_reason: BTreeMap<String, usize>,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupSummary {
    pub docs: usize,
    pub candidate_pairs: usize,
    pub clusters: usize,
    pub duplicate_docs: usize,
    pub duplicate_fraction: f64,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub input_docs: usize,
    pub output_docs: usize,
    pub dropped_docs: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub stages: Vec<StageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup: Option<DedupSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<PplFilterReport>,
}

impl RunReport {
    /// Checks kept + dropped = input for every stage and the chaining of
    /// stage outputs into the next stage's input.
    pub fn check_conservation(&self) -> Result<()> {
        let mut expected = self.input_docs;
        for s in &self.stages {
            let by_reason: usize = s.dropped_by_reason.values().sum();
            if s.input_docs != expected || s.kept + s.dropped != s.input_docs || by_reason != s.dropped {
                return Err(Error::invalid(format!("stage {:?} does not conserve documents", s.stage)));
            }
            expected = s.kept;
        }
        if expected != self.output_docs || self.output_docs + self.dropped_docs != self.input_docs {
            return Err(Error::invalid("run does not conserve documents"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub kept: Vec<Document>,
    pub dropped: Vec<Document>,
    pub report: RunReport,
    pub clusters: Vec<Cluster>,
    /// Wall-clock seconds per stage, kept apart from the deterministic report.
    pub timings: BTreeMap<String, f64>,
}

fn count_tokens(docs: &[Document], tok: &dyn Tokenizer) -> u64 {
    par::map_slice(docs, |d| tok.count(&d.text) as u64).into_iter().sum()
}

fn skipped(stage: Stage) -> StageMark {
    StageMark::new(stage, Verdict::Kept).metric("skipped", 1.0)
}

/// Runs one per-document stage: `f` is applied to in-scope documents and
/// every other document gets a skipped mark.
fn map_stage<F>(docs: Vec<Document>, stage: Stage, scope: &[String], f: F) -> Vec<Document>
where
    F: Fn(Document) -> Document + Sync + Send,
{
    par::map_vec(docs, |mut d| {
        if in_scope(scope, &d.source) {
            f(d)
        } else {
            d.mark(skipped(stage));
            d
        }
    })
}

fn run_stage(
    stage: Stage,
    docs: Vec<Document>,
    cfg: &PipelineConfig,
    prep: &Prepared,
    report: &mut RunReport,
    clusters: &mut Vec<Cluster>,
) -> Result<Vec<Document>> {
    Ok(match stage {
        Stage::Content => map_stage(docs, stage, &[ALL_SOURCES.to_string()], |mut d| {
            content_filter(&mut d, &cfg.content);
            d
        }),
        Stage::Extract => map_stage(docs, stage, &cfg.extract.sources, |d| strip_timestamps(d, &prep.timestamps)),
        Stage::Quality => {
            let q = cfg.quality_config();
            map_stage(docs, stage, &cfg.quality.sources, |mut d| {
                quality_filter(&mut d, &q);
                d
            })
        }
        Stage::Repetition => map_stage(docs, stage, &[ALL_SOURCES.to_string()], |mut d| {
            repetition_filter(&mut d, &cfg.repetition);
            d
        }),
        Stage::Punct => map_stage(docs, stage, &cfg.punct.sources, |d| {
            transform_doc(d, Stage::Punct, |t| to_fullwidth_punct(t, &prep.punct))
        }),
        Stage::S2t => map_stage(docs, stage, &cfg.s2t.sources, |d| {
            transform_doc(d, Stage::S2t, |t| s2t_convert(t, &prep.dict))
        }),
        Stage::Dedup => {
            let dcfg = cfg.dedup.config(cfg.seed);
            let (scoped, idx): (Vec<Document>, Vec<usize>) = docs
                .iter()
                .enumerate()
                .filter(|(_, d)| in_scope(&cfg.dedup.sources, &d.source))
                .map(|(i, d)| (d.clone(), i))
                .unzip();
            let seg = cfg.dedup.segmenter.build();
            let dr = find_near_duplicates(&scoped, &dcfg, Some(seg.as_ref()))?;
            let drop = if cfg.dedup.drop { dr.drop_ids() } else { BTreeSet::new() };
            let mut cluster_of: HashMap<&str, usize> = HashMap::new();
            for c in &dr.clusters {
                for id in &c.doc_ids {
                    cluster_of.insert(id, c.cluster_id);
                }
            }
            let scoped_idx: BTreeSet<usize> = idx.into_iter().collect();
            let out = docs
                .into_iter()
                .enumerate()
                .map(|(i, mut d)| {
                    let mark = if !scoped_idx.contains(&i) {
                        skipped(stage)
                    } else if drop.contains(&d.id) {
                        StageMark::dropped(stage, "near_duplicate")
                    } else {
                        StageMark::new(stage, Verdict::Kept)
                    };
                    let mark = match cluster_of.get(d.id.as_str()) {
                        Some(&c) => mark.metric("cluster", c as f64),
                        None => mark,
                    };
                    d.mark(mark);
                    d
                })
                .collect();
            report.dedup = Some(DedupSummary {
                docs: dr.docs,
                candidate_pairs: dr.candidate_pairs,
                clusters: dr.clusters.len(),
                duplicate_docs: dr.duplicate_docs,
                duplicate_fraction: dr.duplicate_fraction,
                dropped: cfg.dedup.drop,
            });
            *clusters = dr.clusters;
            out
        }
        Stage::Ppl => {
            let (model, tok) = prep.ppl.as_ref().expect("ppl resources prepared");
            let order: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
            let (scoped, rest): (Vec<Document>, Vec<Document>) =
                docs.into_iter().partition(|d| in_scope(&cfg.ppl.sources, &d.source));
            let cutoff = match (cfg.ppl.cutoff, cfg.ppl.target_fraction) {
                (Some(c), _) => c,
                (None, Some(t)) if scoped.is_empty() => {
                    log::warn!("no documents in ppl scope; target fraction {t} not calibrated");
                    f64::MAX
                }
                (None, Some(t)) => calibrate_cutoff(&scoped, model.as_ref(), tok.as_ref(), t)?,
                (None, None) => unreachable!("validated"),
            };
            let (kept, dropped, pr) = ppl_filter(scoped, model.as_ref(), tok.as_ref(), cutoff)?;
            report.ppl = Some(pr);
            let mut by_id: HashMap<String, Document> = kept
                .into_iter()
                .chain(dropped)
                .chain(rest.into_iter().map(|mut d| {
                    d.mark(skipped(stage));
                    d
                }))
                .map(|d| (d.id.clone(), d))
                .collect();
            order
                .iter()
                .map(|id| by_id.remove(id).expect("every document returns from the ppl stage"))
                .collect()
        }
        Stage::Mixture => unreachable!("validated"),
    })
}

fn check_unique_ids(docs: &[Document]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::invalid(format!("duplicate document id {:?}", d.id)));
        }
    }
    Ok(())
}

/// Runs the configured stages over `docs` without touching the filesystem.
/// Kept documents stay in input order; dropped ones are listed by stage,
/// then input order.
pub fn run_stages(docs: Vec<Document>, cfg: &PipelineConfig, prep: &Prepared) -> Result<PipelineOutput> {
    check_unique_ids(&docs)?;
    let tok = prep.tokenizer.as_ref();
    let input_tokens = count_tokens(&docs, tok);
    let mut report = RunReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        input_docs: docs.len(),
        output_docs: 0,
        dropped_docs: 0,
        input_tokens,
        output_tokens: 0,
        stages: Vec::new(),
        dedup: None,
        ppl: None,
    };
    let mut clusters = Vec::new();
    let mut timings = BTreeMap::new();
    let mut alive = docs;
    let mut all_dropped = Vec::new();
    let mut tokens = input_tokens;
    for &stage in &cfg.stages {
        let start = Instant::now();
        let input_docs = alive.len();
        let out = run_stage(stage, alive, cfg, prep, &mut report, &mut clusters)?;
        let (kept, dropped): (Vec<Document>, Vec<Document>) = out.into_iter().partition(|d| !d.is_dropped());
        let mut sr = StageReport {
            stage: Some(stage),
            input_docs,
            kept: kept.len(),
            dropped: dropped.len(),
            input_tokens: tokens,
            ..StageReport::default()
        };
        for d in &dropped {
            let reason = d
                .trail
                .iter()
                .rev()
                .find(|m| m.stage == stage)
                .and_then(|m| m.reason.clone())
                .unwrap_or_else(|| "unspecified".into());
            *sr.dropped_by_reason.entry(reason).or_insert(0) += 1;
        }
        for d in &kept {
            match d.trail.iter().rev().find(|m| m.stage == stage) {
                Some(m) if m.metrics.get("skipped") == Some(&1.0) => sr.skipped += 1,
                _ => {}
            }
            if d.verdict_at(stage) == Some(Verdict::Transformed) {
                sr.transformed += 1;
            }
        }
        tokens = count_tokens(&kept, tok);
        sr.output_tokens = tokens;
        report.stages.push(sr);
        all_dropped.extend(dropped);
        alive = kept;
        timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    }
    report.output_docs = alive.len();
    report.dropped_docs = all_dropped.len();
    report.output_tokens = tokens;
    report.check_conservation()?;
    Ok(PipelineOutput {
        kept: alive,
        dropped: all_dropped,
        report,
        clusters,
        timings,
    })
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    write(&partial)?;
    std::fs::rename(&partial, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, |p| {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        std::fs::write(p, text).map_err(|e| Error::io(p, e))
    })
}

/// Reads the inputs, runs every stage and writes `kept.jsonl`,
/// `dropped.jsonl`, `report.json`, `dedup_clusters.json` and `timings.json`
/// into the output directory. Files are written under a `.partial` name and
/// renamed when complete.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let prep = Prepared::new(cfg)?;
    let mut docs = Vec::new();
    for p in &cfg.inputs {
        docs.extend(read_all(p)?);
    }
    let out = match cfg.workers {
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(|| run_stages(docs, cfg, &prep))?,
        _ => run_stages(docs, cfg, &prep)?,
    };
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("kept.jsonl"), |p| write_jsonl(&out.kept, p).map(|_| ()))?;
    write_atomic(&dir.join("dropped.jsonl"), |p| write_jsonl(&out.dropped, p).map(|_| ()))?;
    write_json(&out.report, &dir.join("report.json"))?;
    write_json(&out.clusters, &dir.join("dedup_clusters.json"))?;
    write_json(&out.timings, &dir.join("timings.json"))?;
    Ok(out)
}
