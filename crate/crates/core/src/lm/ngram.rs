//! Order-N counted language model.
//!
//! Every n-gram of order 1..=N ending at each token (and at the end-of-sequence
//! marker) of the `<s>`-padded sequence is counted. Prediction covers the
//! training tokens plus `<unk>`; the end marker is counted but never predicted,
//! so a sequence of T tokens yields exactly T conditional probabilities.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::tokenizer::Tokenizer;

pub type TokenId = u32;

pub const UNK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
const FIRST_REAL: TokenId = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Smoothing {
    StupidBackoff { alpha: f64 },
    AddK { k: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::StupidBackoff { alpha: 0.4 }
    }
}

impl Smoothing {
    fn validate(&self) -> Result<()> {
        match *self {
            Smoothing::StupidBackoff { alpha } if alpha > 0.0 && alpha <= 1.0 => Ok(()),
            Smoothing::AddK { k } if k > 0.0 && k.is_finite() => Ok(()),
            other => Err(Error::config(format!("invalid smoothing {other:?}"))),
        }
    }
}

type Followers = Vec<(TokenId, u64)>;

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    smoothing: Smoothing,
    /// id -> token; ids 0..3 are `<unk>`, `<s>`, `</s>`.
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    /// counts[n - 1]: n-gram -> count.
    counts: Vec<HashMap<Vec<TokenId>, u64>>,
    /// followers[n - 1]: history of length n - 1 -> (predictable next token, count).
    followers: Vec<HashMap<Vec<TokenId>, Followers>>,
    /// totals[n - 1]: history -> summed counts of predictable continuations.
    totals: Vec<HashMap<Vec<TokenId>, u64>>,
}

impl NGramModel {
    /// Trains on pre-tokenized documents.
    pub fn from_token_docs<S: AsRef<str>>(docs: &[Vec<S>], order: usize, smoothing: Smoothing) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("n-gram order must be at least 1"));
        }
        smoothing.validate()?;
        if docs.iter().all(|d| d.is_empty()) {
            return Err(Error::Empty("n-gram training corpus has no tokens".into()));
        }
        let mut tokens: Vec<&str> = docs.iter().flatten().map(AsRef::as_ref).collect();
        tokens.sort_unstable();
        tokens.dedup();
        let mut vocab = vec!["<unk>".to_string(), "<s>".to_string(), "</s>".to_string()];
        vocab.extend(tokens.iter().map(|t| t.to_string()));
        let index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i as TokenId + FIRST_REAL))
            .collect();

        let mut counts: Vec<HashMap<Vec<TokenId>, u64>> = vec![HashMap::new(); order];
        for doc in docs {
            let ids: Vec<TokenId> = doc.iter().map(|t| index[t.as_ref()]).collect();
            for gram in padded_ngrams(&ids, order) {
                *counts[gram.len() - 1].entry(gram).or_insert(0) += 1;
            }
        }
        let mut model = NGramModel {
            order,
            smoothing,
            vocab,
            index,
            counts,
            followers: Vec::new(),
            totals: Vec::new(),
        };
        model.rebuild_indexes();
        Ok(model)
    }

    fn rebuild_indexes(&mut self) {
        self.followers = vec![HashMap::new(); self.order];
        self.totals = vec![HashMap::new(); self.order];
        for (n, table) in self.counts.iter().enumerate() {
            for (gram, &c) in table {
                let (&last, hist) = gram.split_last().expect("n-grams are non-empty");
                if last == EOS {
                    continue;
                }
                self.followers[n].entry(hist.to_vec()).or_default().push((last, c));
                *self.totals[n].entry(hist.to_vec()).or_insert(0) += c;
            }
        }
        for table in &mut self.followers {
            for list in table.values_mut() {
                list.sort_unstable();
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    /// Number of predictable outcomes: training tokens plus `<unk>`.
    pub fn prediction_size(&self) -> usize {
        self.vocab.len() - 2
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.vocab[id as usize]
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Predictable ids: `<unk>` then every training token.
    pub fn prediction_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        std::iter::once(UNK).chain(FIRST_REAL..self.vocab.len() as TokenId)
    }

    /// Raw count of an n-gram given as token strings (`<s>`/`</s>` allowed).
    pub fn count(&self, gram: &[&str]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        let ids: Vec<TokenId> = gram
            .iter()
            .map(|t| match *t {
                "<s>" => BOS,
                "</s>" => EOS,
                t => self.id(t),
            })
            .collect();
        self.counts[ids.len() - 1].get(&ids).copied().unwrap_or(0)
    }

    /// All stored n-grams of order `n` with counts, as token strings, sorted.
    pub fn ngrams(&self, n: usize) -> Vec<(Vec<String>, u64)> {
        let mut out: Vec<(Vec<String>, u64)> = self.counts[n - 1]
            .iter()
            .map(|(g, &c)| (g.iter().map(|&i| self.token(i).to_string()).collect(), c))
            .collect();
        out.sort();
        out
    }

    fn history_of(&self, context: &[TokenId]) -> Vec<TokenId> {
        let need = self.order - 1;
        let mut h = vec![BOS; need.saturating_sub(context.len())];
        h.extend_from_slice(&context[context.len().saturating_sub(need)..]);
        h
    }

    fn raw(&self, n: usize, hist: &[TokenId], w: TokenId) -> u64 {
        let mut gram = hist.to_vec();
        gram.push(w);
        self.counts[n - 1].get(&gram).copied().unwrap_or(0)
    }

    /// Conditional probability (add-k) or score (stupid backoff) of `w`
    /// after `history`, where `history` has length `order - 1`.
    fn score(&self, history: &[TokenId], w: TokenId) -> f64 {
        match self.smoothing {
            Smoothing::AddK { k } => {
                let n = history.len() + 1;
                let c = self.raw(n, history, w) as f64;
                let total = self.totals[n - 1].get(history).copied().unwrap_or(0) as f64;
                (c + k) / (total + k * self.prediction_size() as f64)
            }
            Smoothing::StupidBackoff { alpha } => {
                let mut factor = 1.0;
                for start in 0..history.len() {
                    let hist = &history[start..];
                    let n = hist.len() + 1;
                    let total = self.totals[n - 1].get(hist).copied().unwrap_or(0);
                    let c = self.raw(n, hist, w);
                    if c > 0 && total > 0 {
                        return factor * c as f64 / total as f64;
                    }
                    factor *= alpha;
                }
                let total = self.totals[0].get(&[][..]).copied().unwrap_or(0) as f64;
                let c = self.raw(1, &[], w) as f64;
                factor * (c + 1.0) / (total + self.prediction_size() as f64)
            }
        }
    }

    /// Natural-log probability of each token given its (reset-at-start) context.
    pub fn token_logprobs_ids(&self, ids: &[TokenId]) -> Vec<f64> {
        let mut padded = vec![BOS; self.order - 1];
        padded.extend_from_slice(ids);
        (0..ids.len())
            .map(|t| self.score(&padded[t..t + self.order - 1], padded[t + self.order - 1]).ln())
            .collect()
    }

    pub fn token_logprobs_str<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let ids: Vec<TokenId> = tokens.iter().map(|t| self.id(t.as_ref())).collect();
        self.token_logprobs_ids(&ids)
    }

    /// Distribution over predictable ids after `context` (any length; padded
    /// or truncated to the model order). Stupid-backoff scores are
    /// renormalized. Returned as a dense vector indexed like
    /// [`prediction_ids`](Self::prediction_ids).
    pub fn next_distribution(&self, context: &[TokenId]) -> Vec<(TokenId, f64)> {
        let history = self.history_of(context);
        let ids: Vec<TokenId> = self.prediction_ids().collect();
        let pos = |id: TokenId| if id == UNK { 0 } else { (id - FIRST_REAL + 1) as usize };
        let size = self.prediction_size() as f64;
        let mut probs = vec![0.0f64; ids.len()];
        match self.smoothing {
            Smoothing::AddK { k } => {
                let total = self.totals[history.len()].get(&history).copied().unwrap_or(0) as f64;
                let denom = total + k * size;
                probs.iter_mut().for_each(|p| *p = k / denom);
                if let Some(list) = self.followers[history.len()].get(&history) {
                    for &(w, c) in list {
                        probs[pos(w)] = (c as f64 + k) / denom;
                    }
                }
            }
            Smoothing::StupidBackoff { alpha } => {
                let mut assigned = vec![false; ids.len()];
                let mut factor = 1.0;
                for start in 0..history.len() {
                    let hist = &history[start..];
                    if let (Some(list), Some(&total)) = (
                        self.followers[hist.len()].get(hist),
                        self.totals[hist.len()].get(hist),
                    ) {
                        for &(w, c) in list {
                            let p = pos(w);
                            if !assigned[p] {
                                assigned[p] = true;
                                probs[p] = factor * c as f64 / total as f64;
                            }
                        }
                    }
                    factor *= alpha;
                }
                let total = self.totals[0].get(&[][..]).copied().unwrap_or(0) as f64;
                for (i, &id) in ids.iter().enumerate() {
                    if !assigned[i] {
                        let c = self.raw(1, &[], id) as f64;
                        probs[i] = factor * (c + 1.0) / (total + size);
                    }
                }
                let sum: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= sum);
            }
        }
        ids.into_iter().zip(probs).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let dump: ModelFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        NGramModel::from_file(dump)
    }

    pub fn to_file(&self) -> ModelFile {
        let counts = (1..=self.order)
            .map(|n| {
                let mut rows: Vec<(Vec<TokenId>, u64)> =
                    self.counts[n - 1].iter().map(|(g, &c)| (g.clone(), c)).collect();
                rows.sort_unstable();
                rows
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            order: self.order,
            smoothing: self.smoothing,
            vocab: self.vocab[FIRST_REAL as usize..].to_vec(),
            counts,
        }
    }

    pub fn from_file(dump: ModelFile) -> Result<Self> {
        if dump.format != MODEL_FORMAT || dump.version != MODEL_VERSION {
            return Err(Error::config(format!(
                "unsupported model file {} v{}",
                dump.format, dump.version
            )));
        }
        if dump.order == 0 || dump.counts.len() != dump.order {
            return Err(Error::config("model file order does not match count tables"));
        }
        dump.smoothing.validate()?;
        let mut vocab = vec!["<unk>".to_string(), "<s>".to_string(), "</s>".to_string()];
        vocab.extend(dump.vocab);
        let index = vocab
            .iter()
            .enumerate()
            .skip(FIRST_REAL as usize)
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        let mut counts = Vec::with_capacity(dump.order);
        for (n, rows) in dump.counts.into_iter().enumerate() {
            let mut table = HashMap::with_capacity(rows.len());
            for (gram, c) in rows {
                if gram.len() != n + 1 || c == 0 || gram.iter().any(|&i| i as usize >= vocab.len()) {
                    return Err(Error::config(format!("bad {}-gram entry {gram:?}", n + 1)));
                }
                table.insert(gram, c);
            }
            counts.push(table);
        }
        let mut model = NGramModel {
            order: dump.order,
            smoothing: dump.smoothing,
            vocab,
            index,
            counts,
            followers: Vec::new(),
            totals: Vec::new(),
        };
        model.rebuild_indexes();
        Ok(model)
    }

    pub fn with_smoothing(mut self, smoothing: Smoothing) -> Result<Self> {
        smoothing.validate()?;
        self.smoothing = smoothing;
        Ok(self)
    }
}

pub const MODEL_FORMAT: &str = "zhcurate-ngram";
pub const MODEL_VERSION: u32 = 1;

/// On-disk JSON count dump. `vocab` lists ordinary tokens, whose ids start
/// at 3 (0 = `<unk>`, 1 = `<s>`, 2 = `</s>`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub order: usize,
    pub smoothing: Smoothing,
    pub vocab: Vec<String>,
    pub counts: Vec<Vec<(Vec<TokenId>, u64)>>,
}

/// Every n-gram (n = 1..=order) ending at each token and at `</s>`, over the
/// sequence padded with order - 1 `<s>` markers.
pub fn padded_ngrams(ids: &[TokenId], order: usize) -> impl Iterator<Item = Vec<TokenId>> + '_ {
    let pad = order - 1;
    let seq: Vec<TokenId> = std::iter::repeat_n(BOS, pad)
        .chain(ids.iter().copied())
        .chain(std::iter::once(EOS))
        .collect();
    (pad..seq.len()).flat_map(move |end| {
        let seq = seq.clone();
        (1..=order).map(move |n| seq[end + 1 - n..=end].to_vec())
    })
}

/// Tokenizes each text and trains a model.
pub fn train_ngram<'a, I>(texts: I, tokenizer: &dyn Tokenizer, order: usize, smoothing: Smoothing) -> Result<NGramModel>
where
    I: IntoIterator<Item = &'a str>,
{
    let docs: Vec<Vec<String>> = texts.into_iter().map(|t| tokenizer.tokenize(t)).collect();
    if docs.is_empty() {
        return Err(Error::Empty("n-gram training corpus has no documents".into()));
    }
    NGramModel::from_token_docs(&docs, order, smoothing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::tokenizer::WhitespaceTokenizer;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ws_model(texts: &[&str], order: usize, smoothing: Smoothing) -> NGramModel {
        train_ngram(texts.iter().copied(), &WhitespaceTokenizer, order, smoothing).unwrap()
    }

    #[test]
    fn bigram_counts_by_hand() {
        let m = ws_model(&["a b"], 2, Smoothing::default());
        let bigrams = m.ngrams(2);
        assert_eq!(
            bigrams,
            vec![
                (vec!["<s>".to_string(), "a".to_string()], 1),
                (vec!["a".to_string(), "b".to_string()], 1),
                (vec!["b".to_string(), "</s>".to_string()], 1),
            ]
        );
        assert_eq!(m.count(&["a", "b"]), 1);
    }

    #[test]
    fn duplicated_doc_doubles_counts() {
        let one = ws_model(&["x y x z"], 3, Smoothing::default());
        let two = ws_model(&["x y x z", "x y x z"], 3, Smoothing::default());
        for n in 1..=3 {
            let a = one.ngrams(n);
            let b = two.ngrams(n);
            assert_eq!(a.len(), b.len());
            for ((ga, ca), (gb, cb)) in a.iter().zip(&b) {
                assert_eq!(ga, gb);
                assert_eq!(2 * ca, *cb);
            }
        }
    }

    #[test]
    fn single_token_corpus_vocab() {
        let m = ws_model(&["a"], 2, Smoothing::default());
        assert_eq!(m.prediction_size(), 2);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(train_ngram(std::iter::empty(), &WhitespaceTokenizer, 2, Smoothing::default()).is_err());
        assert!(train_ngram(["  "], &WhitespaceTokenizer, 2, Smoothing::default()).is_err());
    }

    #[test]
    fn add_one_unigram_by_hand() {
        let m = ws_model(&["a a b"], 1, Smoothing::AddK { k: 1.0 });
        // V = {a, b, <unk>}
        let lp = m.token_logprobs_str(&["a", "b", "q"]);
        assert!((lp[0] - (3.0f64 / 6.0).ln()).abs() < 1e-15);
        assert!((lp[1] - (2.0f64 / 6.0).ln()).abs() < 1e-15);
        assert!((lp[2] - (1.0f64 / 6.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn add_k_unseen_history_is_uniform() {
        let m = ws_model(&["a b c"], 3, Smoothing::AddK { k: 0.5 });
        let d = m.next_distribution(&[m.id("c"), m.id("a")]);
        let v = m.prediction_size() as f64;
        for (_, p) in d {
            assert!((p - 1.0 / v).abs() < 1e-15);
        }
    }

    #[test]
    fn stupid_backoff_is_finite_for_unknowns() {
        let m = ws_model(&["a b c", "b c d"], 3, Smoothing::default());
        for lp in m.token_logprobs_str(&["zz", "a", "q", "d"]) {
            assert!(lp.is_finite() && lp < 0.0);
        }
        let d = m.next_distribution(&[m.id("b")]);
        let sum: f64 = d.iter().map(|(_, p)| p).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let m = ws_model(&["甲 乙 丙", "乙 丙 丁"], 3, Smoothing::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = NGramModel::load(&path).unwrap();
        assert_eq!(back.ngrams(3), m.ngrams(3));
        assert_eq!(back.token_logprobs_str(&["乙", "丙"]), m.token_logprobs_str(&["乙", "丙"]));
    }

    /// Independent count of padded n-grams straight from token strings.
    fn brute_counts(docs: &[Vec<String>], order: usize) -> HashMap<Vec<String>, u64> {
        let mut out = HashMap::new();
        for doc in docs {
            let mut seq = vec!["<s>".to_string(); order - 1];
            seq.extend(doc.iter().cloned());
            seq.push("</s>".to_string());
            for end in order - 1..seq.len() {
                for n in 1..=order {
                    *out.entry(seq[end + 1 - n..=end].to_vec()).or_insert(0) += 1;
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn counts_match_brute_force(docs in proptest::collection::vec(proptest::collection::vec("[abcd]", 1..40), 1..10),
                                    order in 1usize..5) {
            let m = NGramModel::from_token_docs(&docs, order, Smoothing::default()).unwrap();
            let brute = brute_counts(&docs, order);
            let mut stored = 0;
            for n in 1..=order {
                for (gram, c) in m.ngrams(n) {
                    prop_assert_eq!(brute.get(&gram).copied(), Some(c));
                    stored += 1;
                }
            }
            prop_assert_eq!(stored, brute.len());
        }
    }

    #[test]
    fn add_k_normalizes_over_random_histories() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let alphabet = ["a", "b", "c", "d", "e"];
        let docs: Vec<Vec<&str>> = (0..30)
            .map(|_| (0..20).map(|_| alphabet[rng.random_range(0..5)]).collect())
            .collect();
        let m = NGramModel::from_token_docs(&docs, 3, Smoothing::AddK { k: 0.1 }).unwrap();
        let ids: Vec<TokenId> = m.prediction_ids().collect();
        for _ in 0..1000 {
            let hist: Vec<TokenId> = (0..2).map(|_| ids[rng.random_range(0..ids.len())]).collect();
            let sum: f64 = m.prediction_ids().map(|w| m.score(&hist, w)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
        }
    }
}
