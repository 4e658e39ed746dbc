use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splits text into string pieces. Models assign their own ids to pieces, so
/// the trait only fixes the segmentation and its inverse.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;

    fn tokenize(&self, text: &str) -> Vec<String>;

    fn detokenize(&self, pieces: &[String]) -> String;

    /// Fixed vocabulary size, when the tokenizer has one.
    fn vocab_size(&self) -> Option<usize> {
        None
    }

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    fn detokenize(&self, pieces: &[String]) -> String {
        pieces.join(" ")
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// One token per codepoint, whitespace included, so decoding is lossless.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharTokenizer;

impl CharTokenizer {
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.chars().map(u32::from).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| char::from_u32(i).unwrap_or(char::REPLACEMENT_CHARACTER))
            .collect()
    }
}

impl Tokenizer for CharTokenizer {
    fn name(&self) -> &str {
        "char"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        text.chars().map(String::from).collect()
    }

    fn detokenize(&self, pieces: &[String]) -> String {
        pieces.concat()
    }

    fn vocab_size(&self) -> Option<usize> {
        Some(char::MAX as usize + 1)
    }

    fn count(&self, text: &str) -> usize {
        text.chars().count()
    }
}

const WORD_BOUNDARY: char = '\u{2581}';

/// Unigram subword tokenizer: Viterbi segmentation maximizing the summed
/// piece log-probabilities. Spaces are rewritten to U+2581 before
/// segmentation, as in sentencepiece vocabularies. Characters not covered
/// by any piece become single-character pieces at a fixed penalty.
#[derive(Debug, Clone)]
pub struct UnigramTokenizer {
    pieces: Vec<String>,
    scores: HashMap<String, f64>,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
    unknown_score: f64,
}

impl UnigramTokenizer {
    pub const UNK_ID: u32 = 0;

    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut pieces = vec!["<unk>".to_string()];
        let mut scores = HashMap::new();
        for (piece, score) in entries {
            if piece.is_empty() || !score.is_finite() {
                return Err(Error::config(format!("bad vocabulary entry {piece:?} {score}")));
            }
            if piece == "<unk>" || scores.contains_key(&piece) {
                continue;
            }
            scores.insert(piece.clone(), score);
            pieces.push(piece);
        }
        if scores.is_empty() {
            return Err(Error::config("empty unigram vocabulary"));
        }
        let min = scores.values().copied().fold(f64::INFINITY, f64::min);
        let index = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        let max_piece_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        Ok(UnigramTokenizer {
            pieces,
            scores,
            index,
            max_piece_chars,
            unknown_score: min - 10.0,
        })
    }

    /// Reads `piece<TAB>log_prob` lines (the sentencepiece `.vocab` layout).
    pub fn from_vocab_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (piece, score) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::config(format!("vocab line {}: expected piece<TAB>score", i + 1)))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("vocab line {}: bad score {score:?}", i + 1)))?;
            entries.push((piece.to_string(), score));
        }
        UnigramTokenizer::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        UnigramTokenizer::from_vocab_text(&text)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.tokenize(text)
            .iter()
            .map(|p| self.index.get(p).copied().unwrap_or(Self::UNK_ID))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let pieces: Vec<String> = ids
            .iter()
            .map(|&i| self.pieces.get(i as usize).cloned().unwrap_or_default())
            .collect();
        self.detokenize(&pieces)
    }
}

impl Tokenizer for UnigramTokenizer {
    fn name(&self) -> &str {
        "unigram"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text
            .chars()
            .map(|c| if c == ' ' { WORD_BOUNDARY } else { c })
            .collect();
        let n = chars.len();
        // best[i] = (score of best segmentation of chars[..i], start of last piece)
        let mut best: Vec<(f64, usize)> = vec![(f64::NEG_INFINITY, 0); n + 1];
        best[0].0 = 0.0;
        let mut buf = String::new();
        for end in 1..=n {
            for start in end.saturating_sub(self.max_piece_chars)..end {
                if best[start].0 == f64::NEG_INFINITY {
                    continue;
                }
                buf.clear();
                buf.extend(&chars[start..end]);
                let score = match self.scores.get(&buf) {
                    Some(&s) => s,
                    None if end - start == 1 => self.unknown_score,
                    None => continue,
                };
                let total = best[start].0 + score;
                if total > best[end].0 {
                    best[end] = (total, start);
                }
            }
        }
        let mut out = Vec::new();
        let mut end = n;
        while end > 0 {
            let start = best[end].1;
            out.push(chars[start..end].iter().collect());
            end = start;
        }
        out.reverse();
        out
    }

    fn detokenize(&self, pieces: &[String]) -> String {
        pieces.concat().replace(WORD_BOUNDARY, " ")
    }

    fn vocab_size(&self) -> Option<usize> {
        Some(self.pieces.len())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TokenizerSpec {
    Whitespace,
    #[default]
    Char,
    Unigram { vocab: String },
}


impl TokenizerSpec {
    pub fn build(&self) -> Result<Arc<dyn Tokenizer>> {
        Ok(match self {
            TokenizerSpec::Whitespace => Arc::new(WhitespaceTokenizer),
            TokenizerSpec::Char => Arc::new(CharTokenizer),
            TokenizerSpec::Unigram { vocab } => Arc::new(UnigramTokenizer::load(vocab)?),
        })
    }

    /// `whitespace`, `char`, or `unigram:<vocab path>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizerSpec::Whitespace),
            "char" => Ok(TokenizerSpec::Char),
            _ => match s.strip_prefix("unigram:") {
                Some(path) if !path.is_empty() => Ok(TokenizerSpec::Unigram { vocab: path.to_string() }),
                _ => Err(Error::config(format!("unknown tokenizer {s:?}"))),
            },
        }
    }
}
