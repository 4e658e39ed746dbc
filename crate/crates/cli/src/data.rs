use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use zhcurate::corpus::{corpus_stats, read_all, write_jsonl};
use zhcurate::dedup::{find_near_duplicates, DedupConfig, ShingleUnit};
use zhcurate::filter::{content_filter, quality_filter, repetition_filter, ContentRules, QualityConfig, RepetitionConfig};
use zhcurate::lm::{calibrate_cutoff, ppl_filter, train_ngram, NGramModel, Smoothing};
use zhcurate::mixture::{build_mixture, parse_budget, MixtureSpec};
use zhcurate::normalize::{s2t_convert, strip_timestamps, to_fullwidth_punct, transform_doc, ConversionDict, PunctMap, TimestampRules};
use zhcurate::pipeline::{run_pipeline, PipelineConfig};
use zhcurate::segment::SegmenterKind;
use zhcurate::{Document, Stage};

use crate::common::{read_lines, tokenizer, usage, write_json};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InputFormat {
    Jsonl,
    /// One document per non-blank line.
    Lines,
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: InputFormat,
    /// Source name for line inputs, or an override for JSONL inputs.
    #[arg(long)]
    source: Option<String>,
    #[arg(long, default_value = "char")]
    tokenizer: String,
}

fn read_docs(paths: &[PathBuf]) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for p in paths {
        docs.extend(read_all(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(docs)
}

fn write_docs(docs: &[Document], path: &Path) -> Result<()> {
    write_jsonl(docs, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let mut docs = Vec::new();
    for p in &a.inputs {
        match a.format {
            InputFormat::Jsonl => docs.extend(read_all(p)?),
            InputFormat::Lines => {
                let source = a.source.clone().ok_or_else(|| usage("--source is required for line inputs"))?;
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string();
                for (i, line) in read_lines(p)?.into_iter().enumerate() {
                    docs.push(Document::new(format!("{stem}-{i}"), source.clone(), line));
                }
            }
        }
    }
    if let (Some(s), InputFormat::Jsonl) = (&a.source, a.format) {
        docs.iter_mut().for_each(|d| d.source = s.clone());
    }
    let mut seen = BTreeSet::new();
    for d in &docs {
        if !seen.insert(d.id.as_str()) {
            bail!("duplicate document id {:?}", d.id);
        }
    }
    write_docs(&docs, &a.output)?;
    let tok = tokenizer(&a.tokenizer)?;
    let mut by_source: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
    for d in &docs {
        by_source.entry(&d.source).or_default().push(d);
    }
    let stats: BTreeMap<&str, _> = by_source
        .into_iter()
        .map(|(s, ds)| (s, corpus_stats(ds, tok.as_ref())))
        .collect();
    write_json(&stats, None)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormalizeOp {
    Extract,
    Punct,
    S2t,
}

#[derive(Args)]
pub struct NormalizeArgs {
    #[arg(long, value_enum)]
    op: NormalizeOp,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Map file: punctuation TSV, conversion dictionary TSV, or one regex per line for extract.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Only touch these sources (repeatable); all sources when absent.
    #[arg(long = "source")]
    sources: Vec<String>,
}

pub fn normalize(a: NormalizeArgs) -> Result<()> {
    let docs = read_all(&a.input)?;
    let scoped = |d: &Document| a.sources.is_empty() || a.sources.contains(&d.source);
    let out: Vec<Document> = match a.op {
        NormalizeOp::Extract => {
            let rules = match &a.map {
                Some(p) => TimestampRules::from_lines(&std::fs::read_to_string(p)?)?,
                None => TimestampRules::default(),
            };
            docs.into_iter().map(|d| if scoped(&d) { strip_timestamps(d, &rules) } else { d }).collect()
        }
        NormalizeOp::Punct => {
            let map = a.map.as_ref().map(PunctMap::load).transpose()?.unwrap_or_default();
            docs.into_iter()
                .map(|d| if scoped(&d) { transform_doc(d, Stage::Punct, |t| to_fullwidth_punct(t, &map)) } else { d })
                .collect()
        }
        NormalizeOp::S2t => {
            let dict = match &a.map {
                Some(p) => ConversionDict::load(p)?,
                None => ConversionDict::shipped(),
            };
            docs.into_iter()
                .map(|d| if scoped(&d) { transform_doc(d, Stage::S2t, |t| s2t_convert(t, &dict)) } else { d })
                .collect()
        }
    };
    let changed = out
        .iter()
        .filter(|d| d.trail.last().is_some_and(|m| m.verdict == zhcurate::Verdict::Transformed))
        .count();
    write_docs(&out, &a.output)?;
    println!("{} documents, {changed} changed", out.len());
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FilterKind {
    Content,
    Quality,
    Repetition,
}

#[derive(Args)]
pub struct FilterArgs {
    #[arg(long, value_enum)]
    kind: FilterKind,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Where dropped documents go, with their stage marks.
    #[arg(long)]
    dropped: Option<PathBuf>,
    /// TOML rules for content filtering, or repetition thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 150)]
    min_chinese_chars: usize,
    #[arg(long, default_value_t = 0.4)]
    max_symbol_ratio: f64,
}

fn load_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
        None => Ok(T::default()),
    }
}

#[derive(Serialize)]
struct FilterSummary {
    input: usize,
    kept: usize,
    dropped: usize,
    dropped_by_reason: BTreeMap<String, usize>,
}

fn split_and_write(docs: Vec<Document>, output: &Path, dropped_path: Option<&Path>) -> Result<()> {
    let input = docs.len();
    let (kept, dropped): (Vec<_>, Vec<_>) = docs.into_iter().partition(|d| !d.is_dropped());
    let mut by_reason = BTreeMap::new();
    for d in &dropped {
        let reason = d.trail.last().and_then(|m| m.reason.clone()).unwrap_or_default();
        *by_reason.entry(reason).or_insert(0) += 1;
    }
    write_docs(&kept, output)?;
    if let Some(p) = dropped_path {
        write_docs(&dropped, p)?;
    }
    write_json(
        &FilterSummary {
            input,
            kept: kept.len(),
            dropped: dropped.len(),
            dropped_by_reason: by_reason,
        },
        None,
    )
}

pub fn filter(a: FilterArgs) -> Result<()> {
    let mut docs = read_all(&a.input)?;
    match a.kind {
        FilterKind::Content => {
            let rules: ContentRules = load_toml(a.config.as_ref())?;
            docs.iter_mut().for_each(|d| {
                content_filter(d, &rules);
            });
        }
        FilterKind::Quality => {
            let cfg = QualityConfig {
                min_chinese_chars: a.min_chinese_chars,
                max_symbol_ratio: a.max_symbol_ratio,
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            docs.iter_mut().for_each(|d| {
                quality_filter(d, &cfg);
            });
        }
        FilterKind::Repetition => {
            let cfg: RepetitionConfig = load_toml(a.config.as_ref())?;
            docs.iter_mut().for_each(|d| {
                repetition_filter(d, &cfg);
            });
        }
    }
    split_and_write(docs, &a.output, a.dropped.as_deref())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Unit {
    Char,
    Word,
}

#[derive(Args)]
pub struct DedupArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    #[arg(long, default_value_t = 128)]
    k: usize,
    #[arg(long, default_value_t = 32)]
    bands: usize,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "char")]
    unit: Unit,
    /// Remove all but the lowest id of each cluster (needs --output).
    #[arg(long, conflicts_with = "report_only")]
    drop: bool,
    /// Only report clusters; the default.
    #[arg(long)]
    report_only: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Cluster report destination; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn dedup(a: DedupArgs) -> Result<()> {
    let cfg = DedupConfig {
        threshold: a.threshold,
        k: a.k,
        bands: a.bands,
        rows: a.rows,
        seed: a.seed,
        unit: match a.unit {
            Unit::Char => ShingleUnit::CharUnigram,
            Unit::Word => ShingleUnit::WordUnigram,
        },
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if a.drop && a.output.is_none() {
        return Err(usage("--drop needs --output"));
    }
    let docs = read_all(&a.input)?;
    let seg = SegmenterKind::Bigram.build();
    let report = find_near_duplicates(&docs, &cfg, Some(seg.as_ref()))?;
    if let Some(out) = &a.output {
        let drop = if a.drop { report.drop_ids() } else { BTreeSet::new() };
        let kept: Vec<&Document> = docs.iter().filter(|d| !drop.contains(&d.id)).collect();
        write_jsonl(kept, out)?;
    }
    write_json(&report, a.report.as_deref())
}

#[derive(Args)]
pub struct TrainLmArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    order: usize,
    #[arg(long, default_value = "char")]
    tokenizer: String,
    /// Add-k smoothing constant; stupid backoff when absent.
    #[arg(long)]
    add_k: Option<f64>,
    #[arg(long, default_value_t = 0.4)]
    backoff_alpha: f64,
}

pub fn train_lm(a: TrainLmArgs) -> Result<()> {
    let tok = tokenizer(&a.tokenizer)?;
    let docs = read_docs(&a.inputs)?;
    let smoothing = match a.add_k {
        Some(k) => Smoothing::AddK { k },
        None => Smoothing::StupidBackoff { alpha: a.backoff_alpha },
    };
    let model = train_ngram(docs.iter().map(|d| d.text.as_str()), tok.as_ref(), a.order, smoothing)
        .map_err(|e| usage(e.to_string()))?;
    model.save(&a.output)?;
    println!("order {} model over {} token types written to {}", a.order, model.prediction_size(), a.output.display());
    Ok(())
}

#[derive(Args)]
pub struct PplFilterArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    dropped: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "char")]
    tokenizer: String,
    #[arg(long, required_unless_present = "target_fraction", conflicts_with = "target_fraction")]
    cutoff: Option<f64>,
    /// Calibrate the cutoff to remove this fraction of tokens.
    #[arg(long)]
    target_fraction: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn pplfilter(a: PplFilterArgs) -> Result<()> {
    let tok = tokenizer(&a.tokenizer)?;
    let model = NGramModel::load(&a.model)?;
    let docs = read_all(&a.input)?;
    let cutoff = match (a.cutoff, a.target_fraction) {
        (Some(c), _) => c,
        (None, Some(t)) => calibrate_cutoff(&docs, &model, tok.as_ref(), t).map_err(|e| usage(e.to_string()))?,
        (None, None) => unreachable!("clap requires one"),
    };
    let (kept, dropped, report) = ppl_filter(docs, &model, tok.as_ref(), cutoff).map_err(|e| usage(e.to_string()))?;
    write_docs(&kept, &a.output)?;
    if let Some(p) = &a.dropped {
        write_docs(&dropped, p)?;
    }
    write_json(&report, a.report.as_deref())
}

#[derive(Args)]
pub struct MixArgs {
    /// Mixture spec (TOML or JSON); the reference composition when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Token budget: 1b, 3b or a number. Overrides the spec's budget.
    #[arg(long)]
    budget: Option<String>,
    /// Print the solved epochs and stop.
    #[arg(long)]
    dry_run: bool,
    /// Subset corpus as name=path (repeatable).
    #[arg(long = "input", value_parser = parse_named)]
    inputs: Vec<(String, PathBuf)>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "char")]
    tokenizer: String,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    s.split_once('=')
        .map(|(n, p)| (n.to_string(), PathBuf::from(p)))
        .ok_or_else(|| format!("expected name=path, got {s:?}"))
}

#[derive(Serialize)]
struct EpochRow {
    subset: String,
    size_tokens: f64,
    proportion: f64,
    epochs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stated_epochs: Option<f64>,
}

pub fn mix(a: MixArgs) -> Result<()> {
    let budget = a.budget.as_deref().map(parse_budget).transpose().map_err(|e| usage(e.to_string()))?;
    let mut spec = match &a.spec {
        Some(p) => MixtureSpec::load(p).map_err(|e| usage(e.to_string()))?,
        None => MixtureSpec::reference_mix(zhcurate::mixture::BUDGET_1B),
    };
    if let Some(b) = budget {
        spec = spec.with_budget(b);
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if a.dry_run {
        let rows: Vec<EpochRow> = spec
            .solved_epochs()?
            .into_iter()
            .zip(&spec.subsets)
            .map(|((name, epochs), s)| EpochRow {
                subset: name,
                size_tokens: s.size_tokens,
                proportion: s.proportion,
                epochs,
                stated_epochs: s.epochs,
            })
            .collect();
        println!("{:<16} {:>12} {:>10} {:>8}", "subset", "tokens", "share", "epochs");
        for r in &rows {
            println!("{:<16} {:>12.3e} {:>9.2}% {:>8.2}", r.subset, r.size_tokens, r.proportion * 100.0, r.epochs);
        }
        println!("budget {:.3e} tokens", spec.budget_tokens);
        return Ok(());
    }
    let Some(output) = &a.output else {
        return Err(usage("--output is required unless --dry-run"));
    };
    let tok = tokenizer(&a.tokenizer)?;
    let mut corpora = BTreeMap::new();
    for (name, path) in &a.inputs {
        corpora.insert(name.clone(), read_all(path)?);
    }
    let (docs, report) = build_mixture(&corpora, &spec, tok.as_ref(), a.seed).map_err(|e| usage(e.to_string()))?;
    write_docs(&docs, output)?;
    write_json(&report, a.report.as_deref())
}

#[derive(Args)]
pub struct PipelineArgs {
    /// Pipeline config (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

pub fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config).map_err(|e| usage(e.to_string()))?;
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Err(e) = cfg.validate() {
        return Err(usage(e.to_string()));
    }
    let out = run_pipeline(&cfg)?;
    crate::report::print_run(&out.report);
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
