//! Benchmark scoring: domain perplexity, QA-to-text reformulation, exact and
//! prefix exact match, and the last-word (LAMBADA-style) protocol.

use serde::{Deserialize, Serialize};

use crate::corpus::is_chinese_char;
use crate::error::{Error, Result};
use crate::lm::provider::{generate, GenParams, ModelProvider};
use crate::lm::tokenizer::Tokenizer;
use crate::lm::TokenLogProbs;
use crate::normalize::{to_fullwidth_punct, PunctMap};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    #[serde(default)]
    pub context: String,
    pub question: String,
    pub answer: String,
}

impl QAItem {
    pub fn validate(&self) -> Result<()> {
        if self.question.is_empty() || self.answer.is_empty() {
            return Err(Error::invalid("QA item needs a non-empty question and answer"));
        }
        Ok(())
    }
}

pub const DEFAULT_QA_TEMPLATE: &str = "{context}\n{question}{answer}";

/// Fills `{context}`, `{question}` and `{answer}` and trims the result.
pub fn qa_to_text(item: &QAItem, template: &str) -> Result<String> {
    for ph in ["{context}", "{question}", "{answer}"] {
        if !template.contains(ph) {
            return Err(Error::config(format!("QA template is missing {ph}")));
        }
    }
    item.validate()?;
    Ok(template
        .replace("{context}", &item.context)
        .replace("{question}", &item.question)
        .replace("{answer}", &item.answer)
        .trim()
        .to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Perplexity,
    EmAccuracy,
    PrefixEmAccuracy,
    LambadaAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_item: Option<Vec<f64>>,
}

impl EvalReport {
    /// `task,metric,value,n`
    pub fn csv_row(&self) -> String {
        let metric = serde_json::to_value(self.metric)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        format!("{},{},{},{}", self.task, metric, self.value, self.n)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PplWeighting {
    /// exp(-Σ logprob / Σ tokens) over the whole corpus.
    #[default]
    Token,
    /// Mean of per-document perplexities.
    Document,
}

/// Corpus perplexity with every document scored from an empty context.
/// Documents with no tokens are skipped.
pub fn domain_perplexity<S: AsRef<str> + Sync>(
    task: &str,
    model: &dyn TokenLogProbs,
    docs: &[S],
    tokenizer: &dyn Tokenizer,
    weighting: PplWeighting,
) -> Result<EvalReport> {
    let scored: Vec<Result<Option<(f64, usize)>>> = par::map_slice(docs, |d| {
        let toks = tokenizer.tokenize(d.as_ref());
        if toks.is_empty() {
            return Ok(None);
        }
        let lp: f64 = model.token_logprobs(&toks)?.iter().sum();
        Ok(Some((lp, toks.len())))
    });
    let scored: Vec<(f64, usize)> = scored.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    if scored.is_empty() {
        return Err(Error::Empty("no tokens to compute perplexity over".into()));
    }
    let per_doc: Vec<f64> = scored.iter().map(|&(lp, n)| (-lp / n as f64).exp()).collect();
    let value = match weighting {
        PplWeighting::Token => {
            let lp: f64 = scored.iter().map(|s| s.0).sum();
            let n: usize = scored.iter().map(|s| s.1).sum();
            (-lp / n as f64).exp()
        }
        PplWeighting::Document => per_doc.iter().sum::<f64>() / per_doc.len() as f64,
    };
    Ok(EvalReport {
        task: task.to_string(),
        metric: Metric::Perplexity,
        value,
        n: scored.len(),
        per_item: Some(per_doc),
    })
}

/// Trims surrounding whitespace and maps halfwidth punctuation to fullwidth,
/// so "小籠包," and "小籠包，" compare equal.
#[derive(Debug, Clone, Default)]
pub struct AnswerNormalizer {
    punct: PunctMap,
}

impl AnswerNormalizer {
    pub fn new(punct: PunctMap) -> Self {
        AnswerNormalizer { punct }
    }

    pub fn normalize(&self, s: &str) -> String {
        to_fullwidth_punct(s.trim(), &self.punct)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Exact,
    /// Gold is a prefix of the generation.
    #[default]
    Prefix,
    /// Generation is a prefix of the gold answer.
    PrefixReverse,
}

pub fn exact_match(generated: &str, gold: &str, norm: &AnswerNormalizer) -> bool {
    norm.normalize(generated) == norm.normalize(gold)
}

/// True iff the normalized generation starts with the normalized gold answer.
/// An answer that normalizes to nothing never matches.
pub fn prefix_exact_match(generated: &str, gold: &str, norm: &AnswerNormalizer) -> bool {
    let gold = norm.normalize(gold);
    !gold.is_empty() && norm.normalize(generated).starts_with(&gold)
}

pub fn matches(matcher: Matcher, generated: &str, gold: &str, norm: &AnswerNormalizer) -> bool {
    match matcher {
        Matcher::Exact => exact_match(generated, gold, norm),
        Matcher::Prefix => prefix_exact_match(generated, gold, norm),
        Matcher::PrefixReverse => {
            let g = norm.normalize(generated);
            !g.is_empty() && norm.normalize(gold).starts_with(&g)
        }
    }
}

/// Mean of per-item matches over `(generated, gold)` pairs.
pub fn em_accuracy<A: AsRef<str>, B: AsRef<str>>(
    task: &str,
    pairs: &[(A, B)],
    matcher: Matcher,
    norm: &AnswerNormalizer,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("no items to score".into()));
    }
    let per: Vec<f64> = pairs
        .iter()
        .map(|(g, a)| if matches(matcher, g.as_ref(), a.as_ref(), norm) { 1.0 } else { 0.0 })
        .collect();
    Ok(EvalReport {
        task: task.to_string(),
        metric: if matcher == Matcher::Exact {
            Metric::EmAccuracy
        } else {
            Metric::PrefixEmAccuracy
        },
        value: per.iter().sum::<f64>() / per.len() as f64,
        n: per.len(),
        per_item: Some(per),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambadaItem {
    pub passage: String,
    pub target: String,
}

fn is_word_break(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || ('\u{3000}'..='\u{303F}').contains(&c) || ('\u{FF01}'..='\u{FF0F}').contains(&c) || matches!(c, '\u{FF1A}'..='\u{FF20}' | '…' | '—')
}

/// First word of a normalized continuation. Chinese targets take exactly as
/// many codepoints as the target has; other targets run to the next
/// whitespace or punctuation.
pub fn first_word(continuation: &str, target: &str) -> String {
    let text = continuation.trim_start();
    if target.chars().next().is_some_and(is_chinese_char) {
        text.chars().take(target.chars().count()).collect()
    } else {
        text.chars().take_while(|&c| !is_word_break(c)).collect()
    }
}

/// Greedy (top-1) continuation of each passage, long enough for the target
/// word plus `slack` tokens; correct iff its first word equals the target
/// after normalization.
pub fn lambada_accuracy(
    task: &str,
    provider: &dyn ModelProvider,
    items: &[LambadaItem],
    norm: &AnswerNormalizer,
    slack: usize,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::Empty("no LAMBADA items".into()));
    }
    if items.iter().any(|i| i.target.trim().is_empty()) {
        return Err(Error::invalid("LAMBADA targets must be non-empty"));
    }
    let per: Vec<Result<f64>> = par::map_slice(items, |item| {
        let params = GenParams {
            max_new_tokens: item.target.chars().count() + slack.max(1),
            top_k: Some(1),
            retry_on_empty: 1,
            ..GenParams::default()
        };
        let out = generate(provider, &item.passage, &params)?;
        let target = norm.normalize(&item.target);
        let word = norm.normalize(&first_word(&out.text, &target));
        Ok(if word == target { 1.0 } else { 0.0 })
    });
    let per = per.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport {
        task: task.to_string(),
        metric: Metric::LambadaAccuracy,
        value: per.iter().sum::<f64>() / per.len() as f64,
        n: per.len(),
        per_item: Some(per),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::provider::{MockProvider, UniformProvider};
    use proptest::prelude::*;

    fn item(c: &str, q: &str, a: &str) -> QAItem {
        QAItem {
            context: c.into(),
            question: q.into(),
            answer: a.into(),
        }
    }

    #[test]
    fn qa_templates() {
        assert_eq!(qa_to_text(&item("C", "Q", "A"), DEFAULT_QA_TEMPLATE).unwrap(), "C\nQA");
        assert_eq!(qa_to_text(&item("", "Q", "A"), DEFAULT_QA_TEMPLATE).unwrap(), "QA");
        assert!(qa_to_text(&item("C", "Q", "A"), "{question}{answer}").is_err());
        assert!(qa_to_text(&item("C", "", "A"), DEFAULT_QA_TEMPLATE).is_err());
    }

    #[test]
    fn prefix_match_examples() {
        let n = AnswerNormalizer::default();
        assert!(prefix_exact_match("小籠包是一種點心", "小籠包", &n));
        assert!(!prefix_exact_match("包子", "小籠包", &n));
        assert!(prefix_exact_match(" 小籠包", "小籠包", &n));
        assert!(!exact_match("小籠包。", "小籠包", &n));
        assert!(prefix_exact_match("小籠包。", "小籠包", &n));
        assert!(prefix_exact_match("台北,台中", "台北，", &n));
    }

    #[test]
    fn accuracy_counts() {
        let n = AnswerNormalizer::default();
        let pairs = [("a", "a"), ("b", "x"), ("c", "y"), ("d", "z")];
        let r = em_accuracy("t", &pairs, Matcher::Exact, &n).unwrap();
        assert_eq!(r.value, 0.25);
        assert_eq!(r.n, 4);
        let empty: [(&str, &str); 0] = [];
        assert!(em_accuracy("t", &empty, Matcher::Exact, &n).is_err());
    }

    #[test]
    fn uniform_domain_perplexity() {
        let u = UniformProvider::new((0..50).map(|i| i.to_string()).collect()).unwrap();
        let docs = ["1 2 3", "4 5", ""];
        let r = domain_perplexity("d", &u, &docs, &crate::lm::WhitespaceTokenizer, PplWeighting::Token).unwrap();
        assert!((r.value - 50.0).abs() < 1e-9);
        assert_eq!(r.n, 2);
        let none: [&str; 1] = [" "];
        assert!(domain_perplexity("d", &u, &none, &crate::lm::WhitespaceTokenizer, PplWeighting::Token).is_err());
    }

    #[test]
    fn lambada_scripted() {
        let items: Vec<LambadaItem> = ["甲", "乙", "丙", "丁", "戊"]
            .iter()
            .map(|t| LambadaItem {
                passage: format!("段落{t}"),
                target: t.to_string(),
            })
            .collect();
        let right = MockProvider::from_fn(|p, _, _| Ok(p.chars().last().unwrap().to_string() + "。"));
        let n = AnswerNormalizer::default();
        assert_eq!(lambada_accuracy("l", &right, &items, &n, 2).unwrap().value, 1.0);
        let wrong = MockProvider::fixed("錯");
        assert_eq!(lambada_accuracy("l", &wrong, &items, &n, 2).unwrap().value, 0.0);
        let some = MockProvider::from_fn(|p, _, _| {
            let t = p.chars().last().unwrap();
            Ok(if "甲乙丙".contains(t) { t.to_string() } else { "錯".into() })
        });
        assert!((lambada_accuracy("l", &some, &items, &n, 2).unwrap().value - 0.6).abs() < 1e-15);
    }

    #[test]
    fn first_word_rules() {
        assert_eq!(first_word(" 小籠包很好", "小籠包"), "小籠包");
        assert_eq!(first_word("dog, cat", "dog"), "dog");
        assert_eq!(first_word("dog", "dogs"), "dog");
    }

    proptest! {
        #[test]
        fn prefix_reflexive(g in "\\PC{1,20}") {
            let n = AnswerNormalizer::default();
            prop_assume!(!g.trim().is_empty());
            prop_assert!(prefix_exact_match(&g, &g, &n));
        }

        #[test]
        fn accuracy_permutation_invariant(flags in proptest::collection::vec(any::<bool>(), 1..40), rot in 0usize..40) {
            let n = AnswerNormalizer::default();
            let pairs: Vec<(String, String)> = flags.iter().map(|&f| ("x".to_string(), if f { "x" } else { "y" }.to_string())).collect();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let a = em_accuracy("t", &pairs, Matcher::Prefix, &n).unwrap().value;
            let b = em_accuracy("t", &rotated, Matcher::Prefix, &n).unwrap().value;
            prop_assert_eq!(a, b);
        }
    }
}
