//! Text transforms: timestamp stripping, halfwidth to fullwidth punctuation,
//! and dictionary-driven Simplified to Traditional conversion.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use regex::Regex;

use crate::corpus::{Document, Stage, StageMark, Verdict};
use crate::error::{Error, Result};

pub const SHIPPED_S2T: &str = include_str!("../data/s2t_small.tsv");
pub const SHIPPED_PUNCT: &str = include_str!("../data/punct_halfwidth.tsv");

/// Parses `key<TAB>value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_tsv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| Error::config(format!("tsv line {}: expected key<TAB>value", i + 1)))?;
        if k.is_empty() || v.is_empty() {
            return Err(Error::config(format!("tsv line {}: empty key or value", i + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PunctMap {
    entries: BTreeMap<char, char>,
}

fn is_fullwidth_target(c: char) -> bool {
    matches!(c, '\u{FF00}'..='\u{FFEF}' | '\u{3000}'..='\u{303F}' | '\u{2026}')
}

impl PunctMap {
    pub fn new(entries: impl IntoIterator<Item = (char, char)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut values = HashSet::new();
        for (k, v) in entries {
            if !k.is_ascii_punctuation() {
                return Err(Error::config(format!("punct map key {k:?} is not ASCII punctuation")));
            }
            if !is_fullwidth_target(v) {
                return Err(Error::config(format!(
                    "punct map value {v:?} is outside the fullwidth and ideographic punctuation blocks"
                )));
            }
            if !values.insert(v) || map.insert(k, v).is_some() {
                return Err(Error::config(format!("punct map is not injective at {k:?} -> {v:?}")));
            }
        }
        Ok(PunctMap { entries: map })
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let pairs = parse_tsv(text)?
            .into_iter()
            .map(|(k, v)| {
                let mut kc = k.chars();
                let mut vc = v.chars();
                match (kc.next(), kc.next(), vc.next(), vc.next()) {
                    (Some(k), None, Some(v), None) => Ok((k, v)),
                    _ => Err(Error::config(format!("punct map entry {k:?} -> {v:?} is not char to char"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        PunctMap::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        PunctMap::from_tsv(&read_file(path.as_ref())?)
    }

    pub fn get(&self, c: char) -> Option<char> {
        self.entries.get(&c).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for PunctMap {
    fn default() -> Self {
        PunctMap::from_tsv(SHIPPED_PUNCT).expect("shipped punctuation map is valid")
    }
}

pub fn to_fullwidth_punct(text: &str, map: &PunctMap) -> String {
    text.chars().map(|c| map.get(c).unwrap_or(c)).collect()
}

/// Simplified to Traditional dictionary with single-character and phrase entries.
#[derive(Debug, Clone, Default)]
pub struct ConversionDict {
    char_map: HashMap<char, String>,
    phrase_map: HashMap<String, String>,
    max_phrase_len: usize,
}

impl ConversionDict {
    pub fn new(
        chars: impl IntoIterator<Item = (char, String)>,
        phrases: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut dict = ConversionDict::default();
        for (k, v) in chars {
            dict.char_map.insert(k, v);
        }
        for (k, v) in phrases {
            let len = k.chars().count();
            if len < 2 {
                return Err(Error::config(format!("phrase key {k:?} shorter than two characters")));
            }
            dict.max_phrase_len = dict.max_phrase_len.max(len);
            dict.phrase_map.insert(k, v);
        }
        Ok(dict)
    }

    /// One mapping per line; single-character keys go to the character table,
    /// longer keys to the phrase table.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut chars = Vec::new();
        let mut phrases = Vec::new();
        for (k, v) in parse_tsv(text)? {
            let mut it = k.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push((c, v)),
                _ => phrases.push((k, v)),
            }
        }
        ConversionDict::new(chars, phrases)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ConversionDict::from_tsv(&read_file(path.as_ref())?)
    }

    pub fn shipped() -> Self {
        ConversionDict::from_tsv(SHIPPED_S2T).expect("shipped dictionary is valid")
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_phrase_len
    }

    pub fn char_entries(&self) -> usize {
        self.char_map.len()
    }

    pub fn phrase_entries(&self) -> usize {
        self.phrase_map.len()
    }

    /// Characters appearing in any key, and in any value.
    pub fn alphabets(&self) -> (HashSet<char>, HashSet<char>) {
        let keys = self
            .char_map
            .keys()
            .copied()
            .chain(self.phrase_map.keys().flat_map(|k| k.chars()))
            .collect();
        let values = self
            .char_map
            .values()
            .chain(self.phrase_map.values())
            .flat_map(|v| v.chars())
            .collect();
        (keys, values)
    }
}

/// Greedy longest-match conversion, left to right.
pub fn s2t_convert(text: &str, dict: &ConversionDict) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut window = String::new();
    while i < chars.len() {
        let longest = dict.max_phrase_len.min(chars.len() - i);
        let mut hit = None;
        for len in (2..=longest).rev() {
            window.clear();
            window.extend(&chars[i..i + len]);
            if let Some(v) = dict.phrase_map.get(&window) {
                hit = Some((len, v));
                break;
            }
        }
        match hit {
            Some((len, v)) => {
                out.push_str(v);
                i += len;
            }
            None => {
                let c = chars[i];
                match dict.char_map.get(&c) {
                    Some(v) => out.push_str(v),
                    None => out.push(c),
                }
                i += 1;
            }
        }
    }
    out
}

/// Ordered list of regular expressions whose matches are deleted from text.
#[derive(Debug, Clone)]
pub struct TimestampRules {
    patterns: Vec<Regex>,
}

/// Leading ISO date/time, leading "<place>訊" dateline, and CNA-style
/// "（中央社記者…電）" bylines.
pub const DEFAULT_TIMESTAMP_PATTERNS: &[&str] = &[
    r"^\s*\d{4}[-/.]\d{1,2}[-/.]\d{1,2}(?:[T ]\d{1,2}:\d{2}(?::\d{2})?)?\s*",
    r"^\s*\p{Han}{1,4}訊\s*",
    r"[（(]中央社[^）)]{0,40}電[）)]\s*",
];

impl TimestampRules {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| {
                Regex::new(p.as_ref())
                    .map_err(|e| Error::config(format!("timestamp pattern {:?}: {e}", p.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TimestampRules { patterns })
    }

    /// One pattern per line; blank lines and `#` comments ignored.
    pub fn from_lines(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .collect();
        TimestampRules::new(&lines)
    }

    pub fn strip(&self, text: &str) -> String {
        let mut cur = text.to_string();
        for re in &self.patterns {
            if let std::borrow::Cow::Owned(s) = re.replace_all(&cur, "") {
                cur = s;
            }
        }
        cur
    }
}

impl Default for TimestampRules {
    fn default() -> Self {
        TimestampRules::new(DEFAULT_TIMESTAMP_PATTERNS).expect("default patterns compile")
    }
}

pub fn strip_timestamps(mut doc: Document, rules: &TimestampRules) -> Document {
    let stripped = rules.strip(&doc.text);
    let verdict = if stripped != doc.text {
        Verdict::Transformed
    } else {
        Verdict::Kept
    };
    let removed = doc.text.chars().count() - stripped.chars().count();
    doc.text = stripped;
    doc.mark(StageMark::new(Stage::Extract, verdict).metric("removed_chars", removed as f64));
    doc
}

/// Applies a text transform and records an extract/punct/s2t style mark.
pub fn transform_doc(mut doc: Document, stage: Stage, f: impl FnOnce(&str) -> String) -> Document {
    let out = f(&doc.text);
    let verdict = if out != doc.text {
        Verdict::Transformed
    } else {
        Verdict::Kept
    };
    doc.text = out;
    doc.mark(StageMark::new(stage, verdict));
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_dict() -> ConversionDict {
        ConversionDict::new(
            [('里', "裡".to_string()), ('面', "面".to_string()), ('发', "發".to_string())],
            [("公里".to_string(), "公里".to_string())],
        )
        .unwrap()
    }

    #[test]
    fn fullwidth_examples() {
        let map = PunctMap::default();
        assert_eq!(to_fullwidth_punct("你好,世界!", &map), "你好，世界！");
        assert_eq!(to_fullwidth_punct("abc123", &map), "abc123");
        assert_eq!(to_fullwidth_punct("", &map), "");
    }

    #[test]
    fn fullwidth_offset_table() {
        // Shipped entries all follow the U+FF01..U+FF5E offset of 0xFEE0.
        let map = PunctMap::default();
        for c in (0x21u32..0x7f).filter_map(char::from_u32) {
            if let Some(v) = map.get(c) {
                assert_eq!(v as u32, c as u32 + 0xFEE0, "{c:?}");
            }
        }
    }

    #[test]
    fn punct_map_rejects_letters_and_non_injective() {
        assert!(PunctMap::new([('a', 'ａ')]).is_err());
        assert!(PunctMap::new([(',', '，'), ('.', '，')]).is_err());
        assert!(PunctMap::new([(',', 'x')]).is_err());
        assert!(PunctMap::new([('.', '。')]).is_ok());
    }

    #[test]
    fn s2t_phrase_overrides_char() {
        let d = example_dict();
        assert_eq!(s2t_convert("公里", &d), "公里");
        assert_eq!(s2t_convert("里面", &d), "裡面");
        assert_eq!(s2t_convert("发发", &d), "發發");
        assert_eq!(s2t_convert("hello 世界", &d), "hello 世界");
    }

    #[test]
    fn shipped_dict_shape() {
        let d = ConversionDict::shipped();
        assert!(d.char_entries() >= 200);
        assert!(d.phrase_entries() >= 30);
        assert_eq!(d.max_phrase_len(), 5);
        let (keys, values) = d.alphabets();
        assert!(keys.is_disjoint(&values));
        assert_eq!(s2t_convert("软件开发", &d), "軟體開發");
        assert_eq!(s2t_convert("头发", &d), "頭髮");
        assert_eq!(s2t_convert("发展", &d), "發展");
    }

    #[test]
    fn phrase_key_must_be_two_chars() {
        assert!(ConversionDict::new([], [("a".to_string(), "b".to_string())]).is_err());
    }

    #[test]
    fn timestamp_examples() {
        let rules = TimestampRules::default();
        let doc = strip_timestamps(Document::new("1", "gigaword5-cna", "2011-03-04 台北訊 正文…"), &rules);
        assert_eq!(doc.text, "正文…");
        assert_eq!(doc.trail[0].verdict, Verdict::Transformed);

        let doc = strip_timestamps(Document::new("2", "g", "沒有時間戳記的內容"), &rules);
        assert_eq!(doc.text, "沒有時間戳記的內容");
        assert_eq!(doc.trail[0].verdict, Verdict::Kept);

        let doc = strip_timestamps(Document::new("3", "g", ""), &rules);
        assert_eq!(doc.text, "");

        let doc = strip_timestamps(Document::new("4", "g", "（中央社記者王小明台北4日電）行政院今天表示"), &rules);
        assert_eq!(doc.text, "行政院今天表示");
    }

    #[test]
    fn bad_pattern_is_config_error() {
        assert!(matches!(TimestampRules::new(&["("]), Err(Error::Config(_))));
    }

    fn dict_alphabet() -> Vec<char> {
        let d = ConversionDict::shipped();
        let (k, v) = d.alphabets();
        let mut all: Vec<char> = k.union(&v).copied().collect();
        all.extend(['a', ' ', '，', '的']);
        all.sort();
        all
    }

    proptest! {
        #[test]
        fn fullwidth_idempotent(s in "\\PC{0,40}") {
            let map = PunctMap::default();
            let once = to_fullwidth_punct(&s, &map);
            prop_assert_eq!(to_fullwidth_punct(&once, &map), once.clone());
            prop_assert_eq!(once.chars().count(), s.chars().count());
        }

        #[test]
        fn shipped_s2t_idempotent(idx in proptest::collection::vec(0usize..10_000, 0..30)) {
            let alpha = dict_alphabet();
            let s: String = idx.iter().map(|i| alpha[i % alpha.len()]).collect();
            let d = ConversionDict::shipped();
            let once = s2t_convert(&s, &d);
            prop_assert_eq!(s2t_convert(&once, &d), once);
        }

        #[test]
        fn s2t_leaves_unmapped_ascii_alone(s in "[a-zA-Z0-9 ,.]{0,40}") {
            prop_assert_eq!(s2t_convert(&s, &ConversionDict::shipped()), s);
        }
    }
}
