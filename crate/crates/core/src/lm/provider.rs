use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::ngram::{NGramModel, UNK};
use crate::lm::sampling::sample_top_k;
use crate::lm::tokenizer::Tokenizer;
use crate::lm::TokenLogProbs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub max_new_tokens: usize,
    pub top_k: Option<usize>,
    pub temperature: f64,
    pub seed: u64,
    /// Total attempts allowed when the continuation comes back empty.
    pub retry_on_empty: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_new_tokens: 32,
            top_k: None,
            temperature: 1.0,
            seed: 0,
            retry_on_empty: 10,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::config("max_new_tokens must be at least 1"));
        }
        if self.top_k == Some(0) {
            return Err(Error::config("top_k must be at least 1 when set"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenParams { seed, ..self.clone() }
    }
}

/// A language model as seen by evaluation and safety code.
pub trait ModelProvider: TokenLogProbs {
    fn name(&self) -> String;

    /// One sampling run; `params.seed` fully determines the output of local providers.
    fn generate_once(&self, prompt: &str, params: &GenParams) -> Result<String>;

    /// Next-token distribution after `prompt`, most probable first.
    /// Remote providers may truncate to `top_m` entries.
    fn next_token_distribution(&self, prompt: &str, top_m: Option<usize>) -> Result<Vec<(String, f64)>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedText {
    pub text: String,
    pub attempts_used: u32,
    /// Every attempt came back empty.
    pub empty: bool,
}

/// Samples a continuation, retrying while it is empty (whitespace-only counts
/// as empty). Attempt `i` (1-based) uses seed `params.seed + i - 1`;
/// `retry_on_empty` caps the total number of attempts (minimum 1).
pub fn generate(provider: &dyn ModelProvider, prompt: &str, params: &GenParams) -> Result<GeneratedText> {
    params.validate()?;
    let cap = params.retry_on_empty.max(1);
    let mut last = String::new();
    for attempt in 1..=cap {
        let p = params.with_seed(params.seed.wrapping_add(u64::from(attempt - 1)));
        last = provider.generate_once(prompt, &p).map_err(|e| match e {
            Error::Provider { message, .. } => Error::Provider { attempts: attempt, message },
            other => Error::Provider {
                attempts: attempt,
                message: other.to_string(),
            },
        })?;
        if !last.trim().is_empty() {
            return Ok(GeneratedText {
                text: last,
                attempts_used: attempt,
                empty: false,
            });
        }
    }
    Ok(GeneratedText {
        text: last,
        attempts_used: cap,
        empty: true,
    })
}

fn truncate(mut dist: Vec<(String, f64)>, top_m: Option<usize>) -> Vec<(String, f64)> {
    dist.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(m) = top_m {
        dist.truncate(m);
    }
    dist
}

/// Offline reference provider backed by a counted n-gram model.
/// Generation never emits `<unk>`; its mass is dropped before sampling.
#[derive(Clone)]
pub struct NGramProvider {
    model: Arc<NGramModel>,
    tokenizer: Arc<dyn Tokenizer>,
}

impl NGramProvider {
    pub fn new(model: Arc<NGramModel>, tokenizer: Arc<dyn Tokenizer>) -> Self {
        NGramProvider { model, tokenizer }
    }

    pub fn model(&self) -> &NGramModel {
        &self.model
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer.as_ref()
    }
}

impl TokenLogProbs for NGramProvider {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(self.model.token_logprobs_str(tokens))
    }
}

impl ModelProvider for NGramProvider {
    fn name(&self) -> String {
        format!("ngram-{}", self.model.order())
    }

    fn generate_once(&self, prompt: &str, params: &GenParams) -> Result<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut ctx: Vec<u32> = self
            .tokenizer
            .tokenize(prompt)
            .iter()
            .map(|t| self.model.id(t))
            .collect();
        let mut out = Vec::with_capacity(params.max_new_tokens);
        for _ in 0..params.max_new_tokens {
            let mut dist = self.model.next_distribution(&ctx);
            dist.retain(|&(id, _)| id != UNK);
            match sample_top_k(&dist, params.top_k, params.temperature, &mut rng) {
                Some(id) => {
                    ctx.push(id);
                    out.push(self.model.token(id).to_string());
                }
                None => break,
            }
        }
        Ok(self.tokenizer.detokenize(&out))
    }

    fn next_token_distribution(&self, prompt: &str, top_m: Option<usize>) -> Result<Vec<(String, f64)>> {
        let ctx: Vec<u32> = self
            .tokenizer
            .tokenize(prompt)
            .iter()
            .map(|t| self.model.id(t))
            .collect();
        let dist = self
            .model
            .next_distribution(&ctx)
            .into_iter()
            .map(|(id, p)| (self.model.token(id).to_string(), p))
            .collect();
        Ok(truncate(dist, top_m))
    }
}

/// Uniform distribution over a fixed vocabulary; every token, known or not,
/// scores -ln |V|. Generation concatenates sampled tokens.
#[derive(Debug, Clone)]
pub struct UniformProvider {
    vocab: Vec<String>,
}

impl UniformProvider {
    pub fn new(vocab: Vec<String>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::config("uniform provider needs a non-empty vocabulary"));
        }
        Ok(UniformProvider { vocab })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

impl TokenLogProbs for UniformProvider {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(vec![-(self.vocab.len() as f64).ln(); tokens.len()])
    }
}

impl ModelProvider for UniformProvider {
    fn name(&self) -> String {
        format!("uniform-{}", self.vocab.len())
    }

    fn generate_once(&self, _prompt: &str, params: &GenParams) -> Result<String> {
        let p = 1.0 / self.vocab.len() as f64;
        let dist: Vec<(usize, f64)> = (0..self.vocab.len()).map(|i| (i, p)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut out = String::new();
        for _ in 0..params.max_new_tokens {
            if let Some(i) = sample_top_k(&dist, params.top_k, params.temperature, &mut rng) {
                out.push_str(&self.vocab[i]);
            }
        }
        Ok(out)
    }

    fn next_token_distribution(&self, _prompt: &str, top_m: Option<usize>) -> Result<Vec<(String, f64)>> {
        let p = 1.0 / self.vocab.len() as f64;
        Ok(truncate(self.vocab.iter().map(|t| (t.clone(), p)).collect(), top_m))
    }
}

type GenFn = dyn Fn(&str, &GenParams, usize) -> Result<String> + Send + Sync;

/// Deterministic test double. Generation is a function of the prompt, the
/// parameters, and how many times this prompt has been asked before, so
/// scripted sequences stay per-prompt even under parallel callers.
pub struct MockProvider {
    name: String,
    gen: Box<GenFn>,
    calls: Mutex<HashMap<String, usize>>,
    distribution: Vec<(String, f64)>,
    token_logprob: Option<f64>,
}

impl MockProvider {
    pub fn from_fn(f: impl Fn(&str, &GenParams, usize) -> Result<String> + Send + Sync + 'static) -> Self {
        MockProvider {
            name: "mock".into(),
            gen: Box::new(f),
            calls: Mutex::new(HashMap::new()),
            distribution: Vec::new(),
            token_logprob: None,
        }
    }

    /// Always returns `text`.
    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        MockProvider::from_fn(move |_, _, _| Ok(text.clone()))
    }

    /// The n-th request for a prompt gets `script[n]`, repeating the last entry.
    pub fn scripted<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Self {
        let script: Vec<String> = script.into_iter().map(Into::into).collect();
        MockProvider::from_fn(move |_, _, n| Ok(script.get(n).or(script.last()).cloned().unwrap_or_default()))
    }

    /// Every request fails.
    pub fn failing(message: impl Into<String>) -> Self {
        let message = message.into();
        MockProvider::from_fn(move |_, _, _| {
            Err(Error::Provider {
                attempts: 1,
                message: message.clone(),
            })
        })
    }

    /// Fixed next-token distribution returned for every prompt.
    pub fn with_distribution(mut self, dist: Vec<(String, f64)>) -> Self {
        self.distribution = dist;
        self
    }

    /// Constant log-probability assigned to every token.
    pub fn with_token_logprob(mut self, lp: f64) -> Self {
        self.token_logprob = Some(lp);
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl TokenLogProbs for MockProvider {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        match self.token_logprob {
            Some(lp) => Ok(vec![lp; tokens.len()]),
            None => Err(Error::Provider {
                attempts: 1,
                message: "mock provider has no log-probabilities configured".into(),
            }),
        }
    }
}

impl ModelProvider for MockProvider {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn generate_once(&self, prompt: &str, params: &GenParams) -> Result<String> {
        let n = {
            let mut calls = self.calls.lock().expect("mock call table poisoned");
            let slot = calls.entry(prompt.to_string()).or_insert(0);
            *slot += 1;
            *slot - 1
        };
        (self.gen)(prompt, params, n)
    }

    fn next_token_distribution(&self, _prompt: &str, top_m: Option<usize>) -> Result<Vec<(String, f64)>> {
        Ok(truncate(self.distribution.clone(), top_m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ngram::Smoothing;
    use crate::lm::tokenizer::CharTokenizer;

    #[test]
    fn fixed_mock_takes_one_attempt() {
        let g = generate(&MockProvider::fixed("你好"), "p", &GenParams::default()).unwrap();
        assert_eq!((g.text.as_str(), g.attempts_used, g.empty), ("你好", 1, false));
    }

    #[test]
    fn empty_then_text() {
        let m = MockProvider::scripted(["", "好"]);
        let g = generate(&m, "p", &GenParams::default()).unwrap();
        assert_eq!((g.text.as_str(), g.attempts_used), ("好", 2));
    }

    #[test]
    fn retry_ceiling() {
        let m = MockProvider::fixed("");
        let g = generate(&m, "p", &GenParams::default()).unwrap();
        assert!(g.empty);
        assert_eq!(g.attempts_used, 10);
        let once = GenParams {
            retry_on_empty: 0,
            ..GenParams::default()
        };
        assert_eq!(generate(&m, "q", &once).unwrap().attempts_used, 1);
    }

    #[test]
    fn failures_carry_attempt_count() {
        let m = MockProvider::scripted(["", "", "x"]);
        let flaky = MockProvider::from_fn(move |p, params, n| {
            if n == 2 {
                Err(Error::Provider {
                    attempts: 3,
                    message: "down".into(),
                })
            } else {
                m.generate_once(p, params)
            }
        });
        match generate(&flaky, "p", &GenParams::default()) {
            Err(Error::Provider { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_params() {
        let m = MockProvider::fixed("x");
        for p in [
            GenParams {
                max_new_tokens: 0,
                ..GenParams::default()
            },
            GenParams {
                top_k: Some(0),
                ..GenParams::default()
            },
            GenParams {
                temperature: 0.0,
                ..GenParams::default()
            },
        ] {
            assert!(generate(&m, "p", &p).is_err());
        }
    }

    fn ngram_provider() -> NGramProvider {
        let texts = ["台灣的小籠包很好吃", "台灣的夜市很熱鬧", "小籠包是一種點心"];
        let tok: Arc<dyn Tokenizer> = Arc::new(CharTokenizer);
        let model = crate::lm::train_ngram(texts, tok.as_ref(), 3, Smoothing::default()).unwrap();
        NGramProvider::new(Arc::new(model), tok)
    }

    #[test]
    fn greedy_ngram_is_reproducible() {
        let p = ngram_provider();
        let params = GenParams {
            top_k: Some(1),
            max_new_tokens: 6,
            ..GenParams::default()
        };
        let a = generate(&p, "台灣", &params).unwrap();
        let b = generate(&p, "台灣", &params.with_seed(99)).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.text.chars().count(), 6);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let p = ngram_provider();
        let params = GenParams {
            top_k: Some(40),
            max_new_tokens: 10,
            seed: 5,
            ..GenParams::default()
        };
        let a: Vec<String> = (0..20).map(|i| p.generate_once("台", &params.with_seed(i)).unwrap()).collect();
        let b: Vec<String> = (0..20).map(|i| p.generate_once("台", &params.with_seed(i)).unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn ngram_distribution_is_normalized() {
        let p = ngram_provider();
        let d = p.next_token_distribution("台灣", None).unwrap();
        let s: f64 = d.iter().map(|x| x.1).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(d.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(p.next_token_distribution("台灣", Some(3)).unwrap().len(), 3);
    }
}
