//! Keep/drop gates: content rules, length and symbol-ratio quality checks,
//! and repetition statistics for crawled text.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{is_chinese_char, Document, Stage, StageMark, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Kept,
    Dropped(String),
}

impl Decision {
    pub fn is_kept(&self) -> bool {
        matches!(self, Decision::Kept)
    }

    fn into_mark(self, stage: Stage) -> StageMark {
        match self {
            Decision::Kept => StageMark::new(stage, Verdict::Kept),
            Decision::Dropped(reason) => StageMark::dropped(stage, reason),
        }
    }
}

/// Per-source allow lists. A source without rules passes through.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentRules {
    /// `None` admits every source.
    pub allowed_sources: Option<BTreeSet<String>>,
    /// source -> meta key -> allowed values.
    pub allowed_meta: BTreeMap<String, BTreeMap<String, BTreeSet<String>>>,
}

impl ContentRules {
    pub fn check(&self, doc: &Document) -> Decision {
        if let Some(allowed) = &self.allowed_sources {
            if !allowed.contains(&doc.source) {
                return Decision::Dropped("source".into());
            }
        }
        if let Some(rules) = self.allowed_meta.get(&doc.source) {
            for (key, allowed) in rules {
                if let Some(value) = doc.meta.get(key) {
                    if !allowed.contains(value) {
                        return Decision::Dropped(format!("meta:{key}"));
                    }
                }
            }
        }
        Decision::Kept
    }
}

pub fn content_filter(doc: &mut Document, rules: &ContentRules) -> Decision {
    let decision = rules.check(doc);
    doc.mark(decision.clone().into_mark(Stage::Content));
    decision
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub min_chinese_chars: usize,
    pub max_symbol_ratio: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            min_chinese_chars: 150,
            max_symbol_ratio: 0.4,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_symbol_ratio) {
            return Err(Error::config(format!(
                "max_symbol_ratio {} outside [0, 1]",
                self.max_symbol_ratio
            )));
        }
        Ok(())
    }
}

fn is_alnum(c: char) -> bool {
    c.is_ascii_alphanumeric()
        || matches!(c, '\u{FF10}'..='\u{FF19}' | '\u{FF21}'..='\u{FF3A}' | '\u{FF41}'..='\u{FF5A}')
}

/// Counts used by the quality gate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CharCensus {
    pub chinese: usize,
    pub symbols: usize,
    pub non_whitespace: usize,
}

impl CharCensus {
    pub fn of(text: &str) -> Self {
        let mut census = CharCensus::default();
        for c in text.chars().filter(|c| !c.is_whitespace()) {
            census.non_whitespace += 1;
            if is_chinese_char(c) {
                census.chinese += 1;
            } else if !is_alnum(c) {
                census.symbols += 1;
            }
        }
        census
    }

    /// Symbols over non-whitespace codepoints; 0 for empty text.
    pub fn symbol_ratio(&self) -> f64 {
        if self.non_whitespace == 0 {
            0.0
        } else {
            self.symbols as f64 / self.non_whitespace as f64
        }
    }
}

pub fn quality_check(text: &str, cfg: &QualityConfig) -> (Decision, CharCensus) {
    let census = CharCensus::of(text);
    let decision = if census.non_whitespace == 0 {
        Decision::Dropped("empty".into())
    } else if census.chinese < cfg.min_chinese_chars {
        Decision::Dropped("min_chinese_chars".into())
    } else if census.symbol_ratio() > cfg.max_symbol_ratio {
        Decision::Dropped("symbol_ratio".into())
    } else {
        Decision::Kept
    };
    (decision, census)
}

pub fn quality_filter(doc: &mut Document, cfg: &QualityConfig) -> Decision {
    let (decision, census) = quality_check(&doc.text, cfg);
    let mark = decision
        .clone()
        .into_mark(Stage::Quality)
        .metric("chinese_chars", census.chinese as f64)
        .metric("symbols", census.symbols as f64)
        .metric("non_whitespace", census.non_whitespace as f64)
        .metric("symbol_ratio", census.symbol_ratio());
    doc.mark(mark);
    decision
}

pub const TOP_NGRAM_ORDERS: [usize; 3] = [2, 3, 4];
pub const DUP_NGRAM_ORDERS: [usize; 6] = [5, 6, 7, 8, 9, 10];

/// Repetition statistics. Also used as a set of maxima when filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepetitionStats {
    pub dup_line_frac: f64,
    pub dup_para_frac: f64,
    pub dup_line_char_frac: f64,
    pub dup_para_char_frac: f64,
    pub top_ngram_char_frac: BTreeMap<usize, f64>,
    pub dup_ngram_char_frac: BTreeMap<usize, f64>,
}

impl Default for RepetitionStats {
    fn default() -> Self {
        RepetitionStats::gopher_thresholds()
    }
}

impl RepetitionStats {
    pub fn zeros() -> Self {
        RepetitionStats {
            dup_line_frac: 0.0,
            dup_para_frac: 0.0,
            dup_line_char_frac: 0.0,
            dup_para_char_frac: 0.0,
            top_ngram_char_frac: TOP_NGRAM_ORDERS.iter().map(|&n| (n, 0.0)).collect(),
            dup_ngram_char_frac: DUP_NGRAM_ORDERS.iter().map(|&n| (n, 0.0)).collect(),
        }
    }

    pub fn gopher_thresholds() -> Self {
        RepetitionStats {
            dup_line_frac: 0.30,
            dup_para_frac: 0.30,
            dup_line_char_frac: 0.20,
            dup_para_char_frac: 0.20,
            top_ngram_char_frac: [(2, 0.20), (3, 0.18), (4, 0.16)].into_iter().collect(),
            dup_ngram_char_frac: [(5, 0.15), (6, 0.14), (7, 0.13), (8, 0.12), (9, 0.11), (10, 0.10)]
                .into_iter()
                .collect(),
        }
    }

    /// Named statistics in a fixed order.
    pub fn named(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("dup_line_frac".to_string(), self.dup_line_frac),
            ("dup_para_frac".to_string(), self.dup_para_frac),
            ("dup_line_char_frac".to_string(), self.dup_line_char_frac),
            ("dup_para_char_frac".to_string(), self.dup_para_char_frac),
        ];
        out.extend(self.top_ngram_char_frac.iter().map(|(n, v)| (format!("top_{n}gram_char_frac"), *v)));
        out.extend(self.dup_ngram_char_frac.iter().map(|(n, v)| (format!("dup_{n}gram_char_frac"), *v)));
        out
    }

    /// First statistic in `self` that exceeds its counterpart in `maxima`.
    pub fn first_exceeding(&self, maxima: &RepetitionStats) -> Option<String> {
        let limits: HashMap<String, f64> = maxima.named().into_iter().collect();
        self.named()
            .into_iter()
            .find(|(name, v)| limits.get(name).is_some_and(|lim| v > lim))
            .map(|(name, _)| name)
    }

    pub fn validate_as_thresholds(&self) -> Result<()> {
        match self.named().into_iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            Some((name, v)) => Err(Error::config(format!("threshold {name} = {v} outside [0, 1]"))),
            None => Ok(()),
        }
    }
}

/// Fraction of units that repeat an earlier unit, by count and by characters.
fn duplicate_fractions<'a>(units: impl Iterator<Item = &'a str>) -> (f64, f64) {
    let mut seen = std::collections::HashSet::new();
    let (mut total, mut dup, mut total_chars, mut dup_chars) = (0usize, 0usize, 0usize, 0usize);
    for unit in units {
        let chars = unit.chars().count();
        total += 1;
        total_chars += chars;
        if !seen.insert(unit) {
            dup += 1;
            dup_chars += chars;
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (frac(dup, total), frac(dup_chars, total_chars))
}

fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.split('\n').map(str::trim).filter(|l| !l.is_empty())
}

fn paragraphs(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("\n\n") {
        out.push(&rest[..pos]);
        rest = &rest[pos + 2..];
    }
    out.push(rest);
    out.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}

/// Coverage of the most frequent n-gram (0 when no n-gram repeats) and of all
/// repeated n-grams, both as fractions of `chars.len()`.
fn ngram_coverage(chars: &[char], n: usize) -> (f64, f64) {
    let total = chars.len();
    if total < n || n == 0 {
        return (0.0, 0.0);
    }
    let mut positions: HashMap<&[char], Vec<usize>> = HashMap::new();
    for i in 0..=total - n {
        positions.entry(&chars[i..i + n]).or_default().push(i);
    }
    let cover = |starts: &[usize], mask: &mut [bool]| {
        for &s in starts {
            mask[s..s + n].iter_mut().for_each(|m| *m = true);
        }
    };

    let mut dup_mask = vec![false; total];
    let mut best: Option<(usize, usize, &[char])> = None;
    for (gram, starts) in &positions {
        if starts.len() < 2 {
            continue;
        }
        cover(starts, &mut dup_mask);
        let mut mask = vec![false; total];
        cover(starts, &mut mask);
        let covered = mask.iter().filter(|&&m| m).count();
        let key = (starts.len(), covered, *gram);
        let better = match best {
            None => true,
            Some((c, cov, g)) => (key.0, key.1) > (c, cov) || ((key.0, key.1) == (c, cov) && key.2 < g),
        };
        if better {
            best = Some(key);
        }
    }
    let top = best.map_or(0.0, |(_, covered, _)| covered as f64 / total as f64);
    let dup = dup_mask.iter().filter(|&&m| m).count() as f64 / total as f64;
    (top, dup)
}

/// Line, paragraph and character n-gram repetition. N-gram statistics run
/// over the non-whitespace characters of the text.
pub fn repetition_stats(text: &str) -> RepetitionStats {
    let (dup_line_frac, dup_line_char_frac) = duplicate_fractions(lines(text));
    let paras = paragraphs(text);
    let (dup_para_frac, dup_para_char_frac) = duplicate_fractions(paras.into_iter());
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut stats = RepetitionStats {
        dup_line_frac,
        dup_para_frac,
        dup_line_char_frac,
        dup_para_char_frac,
        ..RepetitionStats::zeros()
    };
    for n in TOP_NGRAM_ORDERS {
        stats.top_ngram_char_frac.insert(n, ngram_coverage(&chars, n).0);
    }
    for n in DUP_NGRAM_ORDERS {
        stats.dup_ngram_char_frac.insert(n, ngram_coverage(&chars, n).1);
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepetitionConfig {
    pub thresholds: RepetitionStats,
    pub crawled_only: bool,
    pub crawled_sources: BTreeSet<String>,
}

impl Default for RepetitionConfig {
    fn default() -> Self {
        RepetitionConfig {
            thresholds: RepetitionStats::gopher_thresholds(),
            crawled_only: true,
            crawled_sources: ["cc100-zht".to_string()].into_iter().collect(),
        }
    }
}

pub fn repetition_filter(doc: &mut Document, cfg: &RepetitionConfig) -> Decision {
    if cfg.crawled_only && !cfg.crawled_sources.contains(&doc.source) {
        doc.mark(StageMark::new(Stage::Repetition, Verdict::Kept).metric("skipped", 1.0));
        return Decision::Kept;
    }
    let stats = repetition_stats(&doc.text);
    let decision = match stats.first_exceeding(&cfg.thresholds) {
        Some(name) => Decision::Dropped(name),
        None => Decision::Kept,
    };
    let mut mark = decision.clone().into_mark(Stage::Repetition);
    for (name, v) in stats.named() {
        mark = mark.metric(&name, v);
    }
    doc.mark(mark);
    decision
}
