use serde::{Deserialize, Serialize};

/// Delimiters that end a prompt. The delimiter stays with the prompt.
pub const DEFAULT_DELIMITERS: &str = "，。！？；：、…\n";

pub const MIN_PART_CHARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Human,
    Model(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContinuationPair {
    pub prompt: String,
    pub continuation: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_toxicity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation_toxicity: Option<f64>,
}

/// Splits at the first delimiter, keeping it at the end of the prompt.
/// `None` when the comment has no delimiter.
pub fn split_with(comment: &str, delimiters: &str) -> Option<(String, String)> {
    let (i, c) = comment.char_indices().find(|&(_, c)| delimiters.contains(c))?;
    let cut = i + c.len_utf8();
    Some((comment[..cut].to_string(), comment[cut..].to_string()))
}

pub fn split_prompt_continuation(comment: &str) -> Option<(String, String)> {
    split_with(comment, DEFAULT_DELIMITERS)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub input: usize,
    pub no_delimiter_dropped: usize,
    pub too_short_dropped: usize,
    pub output: usize,
}

/// Splits every comment and keeps pairs whose prompt and continuation are
/// both at least three codepoints long.
pub fn build_toxicity_prompts<S: AsRef<str>>(
    comments: &[S],
    delimiters: &str,
) -> (Vec<PromptContinuationPair>, ConstructionReport) {
    let mut report = ConstructionReport {
        input: comments.len(),
        ..ConstructionReport::default()
    };
    let mut out = Vec::new();
    for c in comments {
        match split_with(c.as_ref(), delimiters) {
            None => report.no_delimiter_dropped += 1,
            Some((p, k)) if p.chars().count() < MIN_PART_CHARS || k.chars().count() < MIN_PART_CHARS => {
                report.too_short_dropped += 1
            }
            Some((prompt, continuation)) => out.push(PromptContinuationPair {
                prompt,
                continuation,
                origin: Origin::Human,
                prompt_toxicity: None,
                continuation_toxicity: None,
            }),
        }
    }
    report.output = out.len();
    (out, report)
}
