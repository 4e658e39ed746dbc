//! Document model, JSONL persistence and corpus statistics.
//!
//! A [`Document`] is the unit that flows through every pipeline stage. Each
//! stage that inspects a document appends one [`StageMark`] to its trail, so
//! a processed file carries its own audit log.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::tokenizer::Tokenizer;

/// Pipeline stages that can leave a mark on a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Content,
    Extract,
    Dedup,
    Quality,
    Ppl,
    Repetition,
    Punct,
    S2t,
    Mixture,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Content,
        Stage::Extract,
        Stage::Dedup,
        Stage::Quality,
        Stage::Ppl,
        Stage::Repetition,
        Stage::Punct,
        Stage::S2t,
        Stage::Mixture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Content => "content",
            Stage::Extract => "extract",
            Stage::Dedup => "dedup",
            Stage::Quality => "quality",
            Stage::Ppl => "ppl",
            Stage::Repetition => "repetition",
            Stage::Punct => "punct",
            Stage::S2t => "s2t",
            Stage::Mixture => "mixture",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Kept,
    Dropped,
    Transformed,
}

/// One entry of a document's audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMark {
    pub stage: Stage,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

impl StageMark {
    pub fn new(stage: Stage, verdict: Verdict) -> Self {
        StageMark {
            stage,
            verdict,
            reason: None,
            metrics: BTreeMap::new(),
        }
    }

    pub fn dropped(stage: Stage, reason: impl Into<String>) -> Self {
        StageMark {
            reason: Some(reason.into()),
            ..StageMark::new(stage, Verdict::Dropped)
        }
    }

    /// Adds a metric. Non-finite values are not representable in JSON and are skipped.
    pub fn metric(mut self, name: &str, value: f64) -> Self {
        if value.is_finite() {
            self.metrics.insert(name.to_string(), value);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trail: Vec<StageMark>,
}

impl Document {
    pub fn new(id: impl Into<String>, source: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            source: source.into(),
            text: text.into(),
            meta: BTreeMap::new(),
            trail: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn mark(&mut self, mark: StageMark) {
        self.trail.push(mark);
    }

    /// Verdict of the most recent mark for `stage`, if any.
    pub fn verdict_at(&self, stage: Stage) -> Option<Verdict> {
        self.trail
            .iter()
            .rev()
            .find(|m| m.stage == stage)
            .map(|m| m.verdict)
    }

    pub fn is_dropped(&self) -> bool {
        self.trail.iter().any(|m| m.verdict == Verdict::Dropped)
    }
}

/// True for CJK Unified Ideographs and Extension A.
pub fn is_chinese_char(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}')
}

pub fn count_chinese(text: &str) -> usize {
    text.chars().filter(|&c| is_chinese_char(c)).count()
}

/// Streaming JSONL reader. Yields documents in file order, checking id
/// uniqueness as it goes.
pub struct JsonlReader<R> {
    inner: R,
    line: usize,
    seen: HashMap<String, usize>,
    buf: Vec<u8>,
    done: bool,
}

impl JsonlReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonlReader::new(BufReader::new(file)))
    }
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(inner: R) -> Self {
        JsonlReader {
            inner,
            line: 0,
            seen: HashMap::new(),
            buf: Vec::new(),
            done: false,
        }
    }

    fn parse_line(&mut self) -> Result<Option<Document>> {
        let line_no = self.line;
        let raw = std::str::from_utf8(&self.buf).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: format!("invalid UTF-8: {e}"),
        })?;
        let raw = raw.trim_end_matches(['\n', '\r']);
        if raw.trim().is_empty() {
            return Ok(None);
        }
        let doc: Document = serde_json::from_str(raw).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if doc.id.is_empty() {
            return Err(Error::MalformedLine {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if let Some(&first) = self.seen.get(&doc.id) {
            return Err(Error::DuplicateId {
                id: doc.id,
                first,
                second: line_no,
            });
        }
        self.seen.insert(doc.id.clone(), line_no);
        Ok(Some(doc))
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.inner.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {
                    self.line += 1;
                    match self.parse_line() {
                        Ok(Some(doc)) => return Some(Ok(doc)),
                        Ok(None) => continue,
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::MalformedLine {
                        line: self.line + 1,
                        message: e.to_string(),
                    }));
                }
            }
        }
        None
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<JsonlReader<BufReader<File>>> {
    JsonlReader::open(path)
}

/// Reads a whole file into memory; convenience for desk-scale corpora.
pub fn read_all(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    read_jsonl(path)?.collect()
}

/// Writes `docs` as JSONL, one document per line. Returns the number of documents written.
pub fn write_jsonl<I, D>(docs: I, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator<Item = D>,
    D: Borrow<Document>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl_to(docs, BufWriter::new(file), path)
}

pub fn write_jsonl_to<I, D, W>(docs: I, mut out: W, path: &Path) -> Result<usize>
where
    I: IntoIterator<Item = D>,
    D: Borrow<Document>,
    W: Write,
{
    let mut offset = 0u64;
    let mut count = 0usize;
    let fail = |offset, source| Error::PartialWrite {
        path: PathBuf::from(path),
        offset,
        source,
    };
    for doc in docs {
        let mut line = serde_json::to_vec(doc.borrow())?;
        line.push(b'\n');
        out.write_all(&line).map_err(|e| fail(offset, e))?;
        offset += line.len() as u64;
        count += 1;
    }
    out.flush().map_err(|e| fail(offset, e))?;
    Ok(count)
}

/// Reads any JSONL file of `T` records (benchmark items, predictions,
/// safety records). Blank lines are skipped.
pub fn read_records<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_records<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut offset = 0u64;
    for r in records {
        let mut line = serde_json::to_vec(r)?;
        line.push(b'\n');
        out.write_all(&line).map_err(|source| Error::PartialWrite {
            path: path.to_path_buf(),
            offset,
            source,
        })?;
        offset += line.len() as u64;
    }
    out.flush().map_err(|source| Error::PartialWrite {
        path: path.to_path_buf(),
        offset,
        source,
    })?;
    Ok(records.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub docs: u64,
    pub total_chars: u64,
    pub chinese_chars: u64,
    pub tokens: u64,
    pub bytes: u64,
}

impl CorpusStats {
    pub fn of_document(doc: &Document, tokenizer: &dyn Tokenizer) -> Self {
        CorpusStats {
            docs: 1,
            total_chars: doc.text.chars().count() as u64,
            chinese_chars: count_chinese(&doc.text) as u64,
            tokens: tokenizer.count(&doc.text) as u64,
            bytes: doc.text.len() as u64,
        }
    }
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(self, rhs: CorpusStats) -> CorpusStats {
        CorpusStats {
            docs: self.docs + rhs.docs,
            total_chars: self.total_chars + rhs.total_chars,
            chinese_chars: self.chinese_chars + rhs.chinese_chars,
            tokens: self.tokens + rhs.tokens,
            bytes: self.bytes + rhs.bytes,
        }
    }
}

impl AddAssign for CorpusStats {
    fn add_assign(&mut self, rhs: CorpusStats) {
        *self = *self + rhs;
    }
}

pub fn corpus_stats<I, D>(docs: I, tokenizer: &dyn Tokenizer) -> CorpusStats
where
    I: IntoIterator<Item = D>,
    D: Borrow<Document>,
{
    docs.into_iter()
        .map(|d| CorpusStats::of_document(d.borrow(), tokenizer))
        .fold(CorpusStats::default(), Add::add)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::tokenizer::WhitespaceTokenizer;
    use std::io::Cursor;

    fn read_str(s: &str) -> Vec<Result<Document>> {
        JsonlReader::new(Cursor::new(s.as_bytes().to_vec())).collect()
    }

    #[test]
    fn reads_single_line() {
        let docs = read_str(r#"{"id":"a","source":"s","text":"你好"}"#);
        assert_eq!(docs.len(), 1);
        let doc = docs.into_iter().next().unwrap().unwrap();
        assert_eq!(doc, Document::new("a", "s", "你好"));
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert!(read_str("").is_empty());
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let input = concat!(
            r#"{"id":"a","source":"s","text":"x"}"#,
            "\n",
            r#"{"id":"b","source":"s","text":"y"}"#,
            "\n",
            r#"{"id":"a","source":"s","text":"z"}"#,
            "\n"
        );
        let res: Result<Vec<_>> = read_str(input).into_iter().collect();
        match res {
            Err(Error::DuplicateId { id, first, second }) => {
                assert_eq!(id, "a");
                assert_eq!((first, second), (1, 3));
            }
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "{\"id\":\"a\",\"source\":\"s\",\"text\":\"x\"}\n{not json}\n";
        let res: Result<Vec<_>> = read_str(input).into_iter().collect();
        assert!(matches!(res, Err(Error::MalformedLine { line: 2, .. })));
    }

    #[test]
    fn missing_text_field_is_malformed() {
        let res: Result<Vec<_>> = read_str(r#"{"id":"a","source":"s"}"#).into_iter().collect();
        assert!(matches!(res, Err(Error::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn invalid_utf8_is_an_error() {
        let mut bytes = br#"{"id":"a","source":"s","text":""#.to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe]);
        bytes.extend_from_slice(b"\"}\n");
        let res: Result<Vec<_>> = JsonlReader::new(Cursor::new(bytes)).collect();
        assert!(matches!(res, Err(Error::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn newline_in_text_is_escaped() {
        let doc = Document::new("n", "s", "第一行\n第二行");
        let mut out = Vec::new();
        write_jsonl_to([&doc], &mut out, Path::new("mem")).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains(r"第一行\n第二行"));
        let back: Vec<_> = read_str(&text).into_iter().map(|d| d.unwrap()).collect();
        assert_eq!(back, vec![doc]);
    }

    #[test]
    fn write_empty_is_zero_lines() {
        let mut out = Vec::new();
        let n = write_jsonl_to(Vec::<Document>::new(), &mut out, Path::new("mem")).unwrap();
        assert_eq!(n, 0);
        assert!(out.is_empty());
    }

    #[test]
    fn stats_count_by_hand() {
        let ws = WhitespaceTokenizer;
        assert_eq!(corpus_stats(Vec::<Document>::new(), &ws), CorpusStats::default());

        let s = corpus_stats([Document::new("1", "s", "你好ab")], &ws);
        assert_eq!(s.total_chars, 4);
        assert_eq!(s.chinese_chars, 2);
        assert_eq!(s.tokens, 1);
        assert_eq!(s.bytes, 8);

        let s = corpus_stats([Document::new("1", "s", "你"), Document::new("2", "s", "a")], &ws);
        assert_eq!(s.docs, 2);
        assert_eq!(s.chinese_chars, 1);
    }

    #[test]
    fn extension_a_counts_as_chinese() {
        assert!(is_chinese_char('\u{3400}'));
        assert!(is_chinese_char('\u{9FFF}'));
        assert!(!is_chinese_char('\u{20000}'));
        assert!(!is_chinese_char('，'));
    }

    #[test]
    fn non_finite_metric_is_skipped() {
        let m = StageMark::new(Stage::Ppl, Verdict::Kept).metric("perplexity", f64::INFINITY);
        assert!(m.metrics.is_empty());
    }
}
