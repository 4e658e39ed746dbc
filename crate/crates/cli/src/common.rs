use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use zhcurate::http::RetryPolicy;
use zhcurate::lm::remote::RemoteProvider;
use zhcurate::lm::{ModelProvider, NGramModel, NGramProvider, Tokenizer, TokenizerSpec};

/// Bad invocation discovered after parsing; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn tokenizer(spec: &str) -> Result<Arc<dyn Tokenizer>> {
    let spec = TokenizerSpec::parse(spec).map_err(|e| usage(e.to_string()))?;
    Ok(spec.build()?)
}

/// Plain-text items, one per line; a line holding a JSON string is decoded
/// so items may contain newlines. Blank lines are skipped.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match serde_json::from_str::<String>(l) {
            Ok(s) if l.trim_start().starts_with('"') => s,
            _ => l.to_string(),
        })
        .collect())
}

pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

#[derive(Args, Clone, Debug)]
pub struct ModelArgs {
    /// Local n-gram model (JSON written by train-lm).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Tokenizer for the local model: whitespace, char or unigram:<vocab>.
    #[arg(long, default_value = "char")]
    pub tokenizer: String,
    /// Inference server base URL, used when no local model is given.
    #[arg(long, env = "INFER_URL")]
    pub infer_url: Option<String>,
    /// Attempts per HTTP request.
    #[arg(long, default_value_t = 3)]
    pub http_attempts: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub http_timeout: u64,
}

impl ModelArgs {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.http_attempts.max(1),
            timeout: std::time::Duration::from_secs(self.http_timeout),
            ..RetryPolicy::default()
        }
    }

    pub fn provider(&self) -> Result<Box<dyn ModelProvider>> {
        match (&self.model, &self.infer_url) {
            (Some(path), _) => {
                let model = NGramModel::load(path).with_context(|| format!("loading {}", path.display()))?;
                Ok(Box::new(NGramProvider::new(Arc::new(model), tokenizer(&self.tokenizer)?)))
            }
            (None, Some(url)) => Ok(Box::new(RemoteProvider::new(url, self.policy()))),
            (None, None) => Err(usage("need --model or --infer-url (or INFER_URL)")),
        }
    }
}
