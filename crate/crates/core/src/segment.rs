//! Word segmenters. Chinese has no spaces, so word-level work needs one of
//! these; the real tagger is external and plugs in through [`Segmenter`].

use std::collections::HashSet;

use crate::corpus::is_chinese_char;

pub trait Segmenter: Send + Sync {
    fn segment(&self, text: &str) -> Vec<String>;
}

/// Splits on whitespace only.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceSegmenter;

impl Segmenter for WhitespaceSegmenter {
    fn segment(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }
}

/// Every non-whitespace codepoint is a word.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharSegmenter;

impl Segmenter for CharSegmenter {
    fn segment(&self, text: &str) -> Vec<String> {
        text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
    }
}

fn is_break(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || ('\u{3000}'..='\u{303F}').contains(&c) || ('\u{FF00}'..='\u{FF0F}').contains(&c) || matches!(c, '\u{FF1A}'..='\u{FF20}' | '…' | '—')
}

/// Stand-in segmenter: splits at whitespace and punctuation, then cuts runs of
/// Chinese characters greedily into two-character words (a trailing odd
/// character becomes a one-character word). Non-Chinese runs stay whole.
#[derive(Debug, Clone, Copy, Default)]
pub struct BigramSegmenter;

impl Segmenter for BigramSegmenter {
    fn segment(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut run: Vec<char> = Vec::new();
        let mut run_is_han = false;
        let flush = |run: &mut Vec<char>, han: bool, out: &mut Vec<String>| {
            if run.is_empty() {
                return;
            }
            if han {
                out.extend(run.chunks(2).map(|c| c.iter().collect::<String>()));
            } else {
                out.push(run.iter().collect());
            }
            run.clear();
        };
        for c in text.chars() {
            if is_break(c) {
                flush(&mut run, run_is_han, &mut out);
                continue;
            }
            let han = is_chinese_char(c);
            if han != run_is_han {
                flush(&mut run, run_is_han, &mut out);
                run_is_han = han;
            }
            run.push(c);
        }
        flush(&mut run, run_is_han, &mut out);
        out
    }
}

/// Greedy longest-match against a word list; unmatched characters become
/// single-character words. Whitespace and punctuation separate words.
#[derive(Debug, Clone, Default)]
pub struct DictSegmenter {
    words: HashSet<String>,
    max_len: usize,
}

impl DictSegmenter {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let words: HashSet<String> = words.into_iter().map(Into::into).collect();
        let max_len = words.iter().map(|w| w.chars().count()).max().unwrap_or(1);
        DictSegmenter { words, max_len }
    }
}

impl Segmenter for DictSegmenter {
    fn segment(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for piece in text.split(is_break).filter(|p| !p.is_empty()) {
            let chars: Vec<char> = piece.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let longest = self.max_len.min(chars.len() - i);
                let len = (2..=longest)
                    .rev()
                    .find(|&l| self.words.contains(&chars[i..i + l].iter().collect::<String>()))
                    .unwrap_or(1);
                out.push(chars[i..i + len].iter().collect());
                i += len;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterKind {
    Whitespace,
    Char,
    Bigram,
}

impl SegmenterKind {
    pub fn build(self) -> Box<dyn Segmenter> {
        match self {
            SegmenterKind::Whitespace => Box::new(WhitespaceSegmenter),
            SegmenterKind::Char => Box::new(CharSegmenter),
            SegmenterKind::Bigram => Box::new(BigramSegmenter),
        }
    }
}
