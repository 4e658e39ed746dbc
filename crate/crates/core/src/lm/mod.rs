//! Tokenizers, the counted n-gram model, perplexity scoring and filtering,
//! and the model-provider abstraction used by evaluation and safety probes.

pub mod ngram;
pub mod provider;
#[cfg(feature = "remote")]
pub mod remote;
pub mod sampling;
pub mod tokenizer;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Stage, StageMark, Verdict};
use crate::error::{Error, Result};
use crate::par;

pub use ngram::{train_ngram, NGramModel, Smoothing};
pub use provider::{generate, GenParams, GeneratedText, MockProvider, ModelProvider, NGramProvider, UniformProvider};
pub use tokenizer::{CharTokenizer, Tokenizer, TokenizerSpec, UnigramTokenizer, WhitespaceTokenizer};

/// Anything that assigns a natural-log conditional probability to each token
/// of a sequence, with the context reset at the start of the sequence.
pub trait TokenLogProbs: Send + Sync {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>>;
}

impl TokenLogProbs for NGramModel {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(self.token_logprobs_str(tokens))
    }
}

pub fn sequence_logprob(model: &dyn TokenLogProbs, tokens: &[String]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Empty("cannot score an empty token sequence".into()));
    }
    Ok(model.token_logprobs(tokens)?.iter().sum())
}

pub fn perplexity(model: &dyn TokenLogProbs, tokens: &[String]) -> Result<f64> {
    let lp = sequence_logprob(model, tokens)?;
    Ok((-lp / tokens.len() as f64).exp())
}

/// Perplexity of one document and its token count. A document with no
/// tokens gets infinite perplexity and zero tokens.
pub fn doc_perplexity(model: &dyn TokenLogProbs, tokenizer: &dyn Tokenizer, text: &str) -> Result<(f64, usize)> {
    let tokens = tokenizer.tokenize(text);
    if tokens.is_empty() {
        return Ok((f64::INFINITY, 0));
    }
    Ok((perplexity(model, &tokens)?, tokens.len()))
}

fn score_all(docs: &[Document], model: &dyn TokenLogProbs, tokenizer: &dyn Tokenizer) -> Result<Vec<(f64, usize)>> {
    par::map_slice(docs, |d| doc_perplexity(model, tokenizer, &d.text))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplFilterReport {
    pub cutoff: f64,
    pub docs: usize,
    pub kept: usize,
    pub dropped: usize,
    pub total_tokens: usize,
    pub removed_tokens: usize,
    pub removed_token_fraction: f64,
}

/// Drops documents whose perplexity exceeds `cutoff`. Each document gets a
/// `ppl` stage mark carrying its perplexity and token count.
pub fn ppl_filter(
    docs: Vec<Document>,
    model: &dyn TokenLogProbs,
    tokenizer: &dyn Tokenizer,
    cutoff: f64,
) -> Result<(Vec<Document>, Vec<Document>, PplFilterReport)> {
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(Error::invalid(format!("perplexity cutoff must be positive, got {cutoff}")));
    }
    let scores = score_all(&docs, model, tokenizer)?;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut report = PplFilterReport {
        cutoff,
        docs: docs.len(),
        kept: 0,
        dropped: 0,
        total_tokens: 0,
        removed_tokens: 0,
        removed_token_fraction: 0.0,
    };
    for (mut doc, (ppl, n)) in docs.into_iter().zip(scores) {
        report.total_tokens += n;
        let mark = if ppl > cutoff {
            report.removed_tokens += n;
            StageMark::dropped(Stage::Ppl, "perplexity")
        } else {
            StageMark::new(Stage::Ppl, Verdict::Kept)
        };
        doc.mark(mark.metric("perplexity", ppl).metric("tokens", n as f64));
        if doc.is_dropped() {
            dropped.push(doc);
        } else {
            kept.push(doc);
        }
    }
    report.kept = kept.len();
    report.dropped = dropped.len();
    if report.total_tokens > 0 {
        report.removed_token_fraction = report.removed_tokens as f64 / report.total_tokens as f64;
    }
    Ok((kept, dropped, report))
}

/// Smallest document perplexity `v` such that the tokens in documents with
/// perplexity strictly above `v` are at most `target` of all tokens.
/// Choosing an observed value means ties sit on the kept side.
pub fn calibrate_cutoff(
    docs: &[Document],
    model: &dyn TokenLogProbs,
    tokenizer: &dyn Tokenizer,
    target: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::invalid(format!("target token fraction must be in [0, 1], got {target}")));
    }
    let scores = score_all(docs, model, tokenizer)?;
    calibrate_from_scores(&scores, target)
}

/// [`calibrate_cutoff`] over precomputed `(perplexity, tokens)` pairs.
pub fn calibrate_from_scores(scores: &[(f64, usize)], target: f64) -> Result<f64> {
    let total: usize = scores.iter().map(|s| s.1).sum();
    if total == 0 {
        return Err(Error::Empty("no tokens to calibrate a perplexity cutoff on".into()));
    }
    let mut finite: Vec<(f64, usize)> = scores.iter().copied().filter(|s| s.0.is_finite()).collect();
    finite.sort_by(|a, b| a.0.total_cmp(&b.0));
    let allowed = target * total as f64;
    // tokens above finite[i].0 = suffix sum over strictly larger values
    let mut above = 0usize;
    let mut best = finite.last().map(|s| s.0).unwrap_or(f64::MAX);
    let mut i = finite.len();
    while i > 0 {
        let v = finite[i - 1].0;
        if above as f64 > allowed {
            break;
        }
        best = v;
        while i > 0 && finite[i - 1].0 == v {
            above += finite[i - 1].1;
            i -= 1;
        }
    }
    Ok(best)
}
