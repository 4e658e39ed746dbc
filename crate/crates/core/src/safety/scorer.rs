use std::path::Path;

use crate::error::{Error, Result};

pub trait ToxicityScorer: Send + Sync {
    /// Score in [0, 1] for non-empty text.
    fn score(&self, text: &str) -> Result<f64>;

    fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>> {
        texts.iter().map(|t| self.score(t)).collect()
    }
}

/// Checks the input and the returned score range.
pub fn score_toxicity(scorer: &dyn ToxicityScorer, text: &str) -> Result<f64> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot score empty text"));
    }
    let s = scorer.score(text)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Scorer {
            attempts: 1,
            message: format!("score {s} outside [0, 1]"),
        });
    }
    Ok(s)
}

/// Offline stand-in for a real toxicity service: each non-overlapping
/// occurrence of a lexicon term contributes weight × term length, and the
/// sum is divided by the text length (codepoints) and clamped to [0, 1].
/// A text consisting of one term scores exactly that term's weight.
#[derive(Debug, Clone, Default)]
pub struct LexiconScorer {
    terms: Vec<(String, f64)>,
}

impl LexiconScorer {
    pub fn new(terms: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut terms: Vec<(String, f64)> = terms.into_iter().collect();
        for (t, w) in &terms {
            if t.is_empty() || !(0.0..=1.0).contains(w) {
                return Err(Error::config(format!("bad lexicon entry {t:?} {w}")));
            }
        }
        // longer terms first so a term inside a longer one is not double counted
        terms.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then_with(|| a.0.cmp(&b.0)));
        terms.dedup_by(|a, b| a.0 == b.0);
        Ok(LexiconScorer { terms })
    }

    /// `term<TAB>weight` lines; `#` starts a comment line.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (t, w) = line
                .split_once('\t')
                .ok_or_else(|| Error::config(format!("lexicon line {}: expected term<TAB>weight", i + 1)))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("lexicon line {}: bad weight", i + 1)))?;
            entries.push((t.to_string(), w));
        }
        LexiconScorer::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LexiconScorer::from_tsv(&text)
    }
}

impl ToxicityScorer for LexiconScorer {
    fn score(&self, text: &str) -> Result<f64> {
        let len = text.chars().count();
        if len == 0 {
            return Err(Error::invalid("cannot score empty text"));
        }
        let mut rest = text.to_string();
        let mut mass = 0.0;
        for (term, w) in &self.terms {
            let hits = rest.matches(term.as_str()).count();
            if hits > 0 {
                mass += w * (hits * term.chars().count()) as f64;
                rest = rest.replace(term.as_str(), "\u{0}");
            }
        }
        Ok((mass / len as f64).clamp(0.0, 1.0))
    }
}

#[cfg(feature = "remote")]
pub use remote::RemoteScorer;

#[cfg(feature = "remote")]
mod remote {
    use std::sync::Mutex;
    use std::time::{Duration, Instant};

    use serde::{Deserialize, Serialize};

    use super::ToxicityScorer;
    use crate::error::{Error, Result};
    use crate::http::{Failure, JsonClient, RetryPolicy};

    /// Client for `POST /score {text} -> {toxicity}` and
    /// `POST /score_batch {texts} -> {scores}`. `score` is accepted as an
    /// alias of `toxicity`. Requests are spaced at least `min_interval` apart.
    pub struct RemoteScorer {
        client: JsonClient,
        min_interval: Duration,
        last: Mutex<Option<Instant>>,
        batch_size: usize,
    }

    #[derive(Serialize)]
    struct One<'a> {
        text: &'a str,
    }

    #[derive(Serialize)]
    struct Batch<'a> {
        texts: &'a [String],
    }

    #[derive(Deserialize)]
    struct OneResponse {
        #[serde(alias = "score")]
        toxicity: f64,
    }

    #[derive(Deserialize)]
    struct BatchResponse {
        #[serde(alias = "toxicity")]
        scores: Vec<f64>,
    }

    fn scorer_error(f: Failure) -> Error {
        Error::Scorer {
            attempts: f.attempts,
            message: f.message,
        }
    }

    fn check(s: f64) -> Result<f64> {
        if (0.0..=1.0).contains(&s) {
            Ok(s)
        } else {
            Err(Error::Scorer {
                attempts: 1,
                message: format!("score {s} outside [0, 1]"),
            })
        }
    }

    impl RemoteScorer {
        pub fn new(base_url: &str, policy: RetryPolicy, min_interval: Duration, batch_size: usize) -> Self {
            RemoteScorer {
                client: JsonClient::new(base_url, policy),
                min_interval,
                last: Mutex::new(None),
                batch_size: batch_size.max(1),
            }
        }

        fn pace(&self) {
            let mut last = self.last.lock().expect("rate limiter poisoned");
            if let Some(t) = *last {
                let since = t.elapsed();
                if since < self.min_interval {
                    std::thread::sleep(self.min_interval - since);
                }
            }
            *last = Some(Instant::now());
        }
    }

    impl ToxicityScorer for RemoteScorer {
        fn score(&self, text: &str) -> Result<f64> {
            if text.is_empty() {
                return Err(Error::invalid("cannot score empty text"));
            }
            self.pace();
            let r: OneResponse = self.client.post("/score", &One { text }).map_err(scorer_error)?;
            check(r.toxicity)
        }

        fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(texts.len());
            for chunk in texts.chunks(self.batch_size) {
                self.pace();
                let r: BatchResponse = self
                    .client
                    .post("/score_batch", &Batch { texts: chunk })
                    .map_err(scorer_error)?;
                if r.scores.len() != chunk.len() {
                    return Err(Error::Scorer {
                        attempts: 1,
                        message: format!("expected {} scores, got {}", chunk.len(), r.scores.len()),
                    });
                }
                for s in r.scores {
                    out.push(check(s)?);
                }
            }
            Ok(out)
        }
    }
}
