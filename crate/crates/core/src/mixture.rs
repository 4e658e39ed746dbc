//! Scaling-law token accounting and the mixture algebra relating subset
//! sizes, epochs, sampling proportions and a token budget, plus a seeded
//! interleaving sampler that realizes a mixture from concrete corpora.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Stage, StageMark, Verdict};
use crate::error::{Error, Result};
use crate::lm::tokenizer::Tokenizer;

pub const BUDGET_1B: f64 = 11.5e9;
pub const BUDGET_3B: f64 = 13e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingParams {
    pub chinchilla_ratio: f64,
    pub kaplan_exponent: f64,
    /// (N0 parameters, D0 tokens)
    pub kaplan_reference: Option<(f64, f64)>,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams {
            chinchilla_ratio: 20.0,
            kaplan_exponent: 0.74,
            kaplan_reference: None,
        }
    }
}

impl ScalingParams {
    pub fn with_reference(mut self, params: f64, tokens: f64) -> Self {
        self.kaplan_reference = Some((params, tokens));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chinchilla_ratio > 0.0 && self.chinchilla_ratio.is_finite()) {
            return Err(Error::config("chinchilla_ratio must be positive"));
        }
        if !(self.kaplan_exponent > 0.0 && self.kaplan_exponent <= 1.0) {
            return Err(Error::config("kaplan_exponent must be in (0, 1]"));
        }
        if let Some((n0, d0)) = self.kaplan_reference {
            if !(n0 > 0.0 && d0 > 0.0 && n0.is_finite() && d0.is_finite()) {
                return Err(Error::config("kaplan_reference must be positive"));
            }
        }
        Ok(())
    }
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::invalid(format!("{what} must be positive, got {x}")))
    }
}

pub fn chinchilla_tokens(params: f64, sp: &ScalingParams) -> Result<f64> {
    sp.validate()?;
    Ok(sp.chinchilla_ratio * positive(params, "parameter count")?)
}

pub fn params_for_tokens(tokens: f64, sp: &ScalingParams) -> Result<f64> {
    sp.validate()?;
    Ok(positive(tokens, "token count")? / sp.chinchilla_ratio)
}

/// D = D0 * (N / N0)^exponent.
pub fn kaplan_tokens(params: f64, sp: &ScalingParams) -> Result<f64> {
    sp.validate()?;
    let params = positive(params, "parameter count")?;
    let (n0, d0) = sp
        .kaplan_reference
        .ok_or_else(|| Error::config("kaplan_tokens needs a reference point (N0, D0)"))?;
    if params == n0 {
        return Ok(d0);
    }
    Ok(d0 * (params / n0).powf(sp.kaplan_exponent))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subset {
    pub name: String,
    pub size_tokens: f64,
    pub proportion: f64,
    /// Stated epochs, checked for consistency when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub budget_tokens: f64,
    /// Rescale proportions to sum to 1 on load (for hand-copied tables whose
    /// rounded percentages miss 100%).
    #[serde(default)]
    pub normalize_proportions: bool,
    pub subsets: Vec<Subset>,
}

pub const PROPORTION_TOLERANCE: f64 = 1e-6;
pub const CONSISTENCY_TOLERANCE: f64 = 0.05;

impl MixtureSpec {
    /// The reference Traditional Chinese composition (sizes in tokens,
    /// epochs, percentages), proportions renormalized from their 99.9% sum.
    pub fn reference_mix(budget_tokens: f64) -> Self {
        let rows = [
            ("gigaword5-cna", 0.8e9, 2.8, 19.4),
            ("asbc", 0.01e9, 4.6, 0.4),
            ("coct-books", 0.3e9, 7.7, 20.0),
            ("cc100-zht", 2.0e9, 1.7, 28.9),
            ("wikipedia-zht", 0.4e9, 2.9, 10.1),
            ("theses", 0.4e9, 2.9, 10.1),
            ("xp3-zht", 1.1e9, 1.2, 11.0),
        ];
        let mut spec = MixtureSpec {
            budget_tokens,
            normalize_proportions: true,
            subsets: rows
                .iter()
                .map(|&(name, size, epochs, pct)| Subset {
                    name: name.to_string(),
                    size_tokens: size,
                    proportion: pct / 100.0,
                    epochs: Some(epochs),
                })
                .collect(),
        };
        spec.normalize();
        spec
    }

    pub fn normalize(&mut self) {
        let sum: f64 = self.subsets.iter().map(|s| s.proportion).sum();
        if sum > 0.0 {
            self.subsets.iter_mut().for_each(|s| s.proportion /= sum);
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut spec: MixtureSpec = toml::from_str(text).map_err(|e| Error::config(format!("mixture spec: {e}")))?;
        if spec.normalize_proportions {
            spec.normalize();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut spec: MixtureSpec = serde_json::from_str(text)?;
        if spec.normalize_proportions {
            spec.normalize();
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            MixtureSpec::from_json(&text)
        } else {
            MixtureSpec::from_toml(&text)
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive(self.budget_tokens, "budget_tokens")?;
        if self.subsets.is_empty() {
            return Err(Error::config("mixture spec has no subsets"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.subsets {
            if !seen.insert(&s.name) {
                return Err(Error::config(format!("subset {:?} listed twice", s.name)));
            }
            if !(s.size_tokens > 0.0 && s.size_tokens.is_finite()) {
                return Err(Error::config(format!("subset {:?}: size_tokens must be positive", s.name)));
            }
            if !(0.0..=1.0).contains(&s.proportion) {
                return Err(Error::config(format!("subset {:?}: proportion outside [0, 1]", s.name)));
            }
        }
        let sum: f64 = self.subsets.iter().map(|s| s.proportion).sum();
        if (sum - 1.0).abs() > PROPORTION_TOLERANCE {
            return Err(Error::config(format!("proportions sum to {sum}, expected 1")));
        }
        for s in &self.subsets {
            if let Some(e) = s.epochs {
                let target = s.proportion * self.budget_tokens;
                let rel = (s.size_tokens * e - target).abs() / target;
                if rel > CONSISTENCY_TOLERANCE {
                    return Err(Error::config(format!(
                        "subset {:?}: size x epochs = {:.4e} but proportion x budget = {:.4e} ({:.1}% apart)",
                        s.name,
                        s.size_tokens * e,
                        target,
                        rel * 100.0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replaces the budget. Stated epochs refer to the old budget, so they
    /// are cleared when it changes.
    pub fn with_budget(mut self, budget_tokens: f64) -> Self {
        if budget_tokens != self.budget_tokens {
            self.budget_tokens = budget_tokens;
            self.subsets.iter_mut().for_each(|s| s.epochs = None);
        }
        self
    }

    pub fn solved_epochs(&self) -> Result<Vec<(String, f64)>> {
        let epochs = solve_epochs(
            &self.subsets.iter().map(|s| (s.size_tokens, s.proportion)).collect::<Vec<_>>(),
            self.budget_tokens,
        )?;
        Ok(self.subsets.iter().map(|s| s.name.clone()).zip(epochs).collect())
    }
}

/// Accepts `1b`, `3b`, or a number such as `11.5e9`.
pub fn parse_budget(s: &str) -> Result<f64> {
    match s.to_ascii_lowercase().as_str() {
        "1b" | "1b1" => Ok(BUDGET_1B),
        "3b" => Ok(BUDGET_3B),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|b| *b > 0.0 && b.is_finite())
            .ok_or_else(|| Error::invalid(format!("bad token budget {s:?}"))),
    }
}

/// epochs_i = proportion_i * budget / size_i for `(size, proportion)` pairs.
pub fn solve_epochs(subsets: &[(f64, f64)], budget_tokens: f64) -> Result<Vec<f64>> {
    positive(budget_tokens, "budget")?;
    let sum: f64 = subsets.iter().map(|s| s.1).sum();
    if (sum - 1.0).abs() > PROPORTION_TOLERANCE {
        return Err(Error::invalid(format!("proportions sum to {sum}, expected 1")));
    }
    subsets
        .iter()
        .map(|&(size, p)| {
            if size <= 0.0 {
                Err(Error::invalid("subset size must be positive"))
            } else {
                Ok(p * budget_tokens / size)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRealized {
    pub target_tokens: f64,
    pub realized_tokens: u64,
    pub realized_epochs: f64,
    /// Passes begun, the last possibly partial.
    pub passes: u32,
    pub docs_emitted: u64,
    pub share: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub seed: u64,
    pub budget_tokens: f64,
    pub total_tokens: u64,
    pub subsets: BTreeMap<String, SubsetRealized>,
}

struct SubsetState<'a> {
    name: &'a str,
    docs: &'a [Document],
    tokens: Vec<u64>,
    corpus_tokens: u64,
    target: f64,
    emitted: u64,
    docs_emitted: u64,
    order: Vec<usize>,
    pos: usize,
    pass: u32,
    rng: ChaCha8Rng,
}

impl SubsetState<'_> {
    fn remaining(&self) -> f64 {
        self.target - self.emitted as f64
    }

    fn next_doc(&mut self) -> (usize, u32) {
        if self.pos == self.order.len() {
            self.order = (0..self.docs.len()).filter(|&i| self.tokens[i] > 0).collect();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.pass += 1;
        }
        let i = self.order[self.pos];
        self.pos += 1;
        (i, self.pass)
    }
}

fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// Seeded interleaving of subset corpora. Each subset owns a token quota of
/// `proportion * budget`; at every step a subset is drawn with probability
/// proportional to its remaining quota and emits its next document. A
/// subset walks its corpus in a fresh seeded order on every pass, so the
/// final fractional pass stops at a seeded point. Emitted documents get an
/// id suffix `#<pass>` and a `mixture` stage mark.
pub struct MixtureStream<'a> {
    states: Vec<SubsetState<'a>>,
    rng: ChaCha8Rng,
    seed: u64,
    budget: f64,
}

impl<'a> MixtureStream<'a> {
    pub fn new(
        corpora: &'a BTreeMap<String, Vec<Document>>,
        spec: &'a MixtureSpec,
        tokenizer: &dyn Tokenizer,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let mut states = Vec::with_capacity(spec.subsets.len());
        for s in &spec.subsets {
            let docs = corpora
                .get(&s.name)
                .ok_or_else(|| Error::invalid(format!("no corpus supplied for subset {:?}", s.name)))?;
            let tokens: Vec<u64> = docs.iter().map(|d| tokenizer.count(&d.text) as u64).collect();
            let corpus_tokens: u64 = tokens.iter().sum();
            if corpus_tokens == 0 {
                return Err(Error::Empty(format!("corpus for subset {:?} has no tokens", s.name)));
            }
            states.push(SubsetState {
                name: &s.name,
                docs,
                tokens,
                corpus_tokens,
                target: s.proportion * spec.budget_tokens,
                emitted: 0,
                docs_emitted: 0,
                order: Vec::new(),
                pos: 0,
                pass: 0,
                rng: ChaCha8Rng::seed_from_u64(seed ^ name_hash(&s.name)),
            });
        }
        Ok(MixtureStream {
            states,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            budget: spec.budget_tokens,
        })
    }

    pub fn report(&self) -> MixtureReport {
        let total: u64 = self.states.iter().map(|s| s.emitted).sum();
        MixtureReport {
            seed: self.seed,
            budget_tokens: self.budget,
            total_tokens: total,
            subsets: self
                .states
                .iter()
                .map(|s| {
                    (
                        s.name.to_string(),
                        SubsetRealized {
                            target_tokens: s.target,
                            realized_tokens: s.emitted,
                            realized_epochs: s.emitted as f64 / s.corpus_tokens as f64,
                            passes: s.pass,
                            docs_emitted: s.docs_emitted,
                            share: if total > 0 { s.emitted as f64 / total as f64 } else { 0.0 },
                        },
                    )
                })
                .collect(),
        }
    }
}

impl Iterator for MixtureStream<'_> {
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        let total: f64 = self.states.iter().map(|s| s.remaining().max(0.0)).sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = self.rng.random::<f64>() * total;
        let mut pick = None;
        for (i, s) in self.states.iter().enumerate() {
            let r = s.remaining().max(0.0);
            if r <= 0.0 {
                continue;
            }
            pick = Some(i);
            if u < r {
                break;
            }
            u -= r;
        }
        let state = &mut self.states[pick?];
        let (i, pass) = state.next_doc();
        state.emitted += state.tokens[i];
        state.docs_emitted += 1;
        let src = &state.docs[i];
        let mut doc = src.clone();
        doc.id = format!("{}#{}", src.id, pass);
        doc.mark(
            StageMark::new(Stage::Mixture, Verdict::Kept)
                .metric("pass", f64::from(pass))
                .metric("tokens", state.tokens[i] as f64),
        );
        Some(doc)
    }
}

/// Collects a whole [`MixtureStream`].
pub fn build_mixture(
    corpora: &BTreeMap<String, Vec<Document>>,
    spec: &MixtureSpec,
    tokenizer: &dyn Tokenizer,
    seed: u64,
) -> Result<(Vec<Document>, MixtureReport)> {
    let mut stream = MixtureStream::new(corpora, spec, tokenizer, seed)?;
    let docs: Vec<Document> = stream.by_ref().collect();
    Ok((docs, stream.report()))
}
