use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use zhcurate::corpus::{read_all, read_records, write_records};
use zhcurate::eval::{domain_perplexity, em_accuracy, lambada_accuracy, AnswerNormalizer, LambadaItem, Matcher, PplWeighting};
use zhcurate::lm::GenParams;
use zhcurate::safety::bias::{WinoReport, DEFAULT_TEMPLATES};
use zhcurate::safety::prompts::DEFAULT_DELIMITERS;
use zhcurate::safety::scorer::RemoteScorer;
use zhcurate::safety::{
    build_toxicity_prompts, cooccurrence_analysis, run_continuations, toxicity_trend, winobias_yes_probability,
    CoocConfig, LexiconScorer, SafetyRecord, ToxicityScorer, WinoPrompt,
};

use crate::common::{read_lines, tokenizer, usage, write_json, ModelArgs};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Task {
    /// Gold answer is a prefix of the prediction.
    PrefixEm,
    Em,
    Ppl,
    Lambada,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    task: Task,
    /// Task name recorded in the report.
    #[arg(long)]
    name: Option<String>,
    /// Predictions, one per line (em tasks).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Gold answers (em), documents JSONL or text lines (ppl), or passage/target JSONL (lambada).
    #[arg(long)]
    gold: PathBuf,
    /// Prefix in the opposite direction: the prediction is a prefix of the gold answer.
    #[arg(long)]
    reverse_prefix: bool,
    /// Average per-document perplexities instead of pooling tokens.
    #[arg(long)]
    doc_weighted: bool,
    /// Extra generated tokens beyond the target length (lambada).
    #[arg(long, default_value_t = 2)]
    slack: usize,
    #[command(flatten)]
    model: ModelArgs,
    /// Also print `task,metric,value,n`.
    #[arg(long)]
    csv: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn read_texts(path: &PathBuf) -> Result<Vec<String>> {
    match read_all(path) {
        Ok(docs) => Ok(docs.into_iter().map(|d| d.text).collect()),
        Err(_) => read_lines(path),
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let norm = AnswerNormalizer::default();
    let report = match a.task {
        Task::PrefixEm | Task::Em => {
            let pred = a.pred.as_ref().ok_or_else(|| usage("--pred is required for em tasks"))?;
            let preds = read_lines(pred)?;
            let gold = read_lines(&a.gold)?;
            if preds.len() != gold.len() {
                return Err(usage(format!("{} predictions but {} gold answers", preds.len(), gold.len())));
            }
            let matcher = match (a.task, a.reverse_prefix) {
                (Task::Em, _) => Matcher::Exact,
                (_, true) => Matcher::PrefixReverse,
                _ => Matcher::Prefix,
            };
            let pairs: Vec<(String, String)> = preds.into_iter().zip(gold).collect();
            em_accuracy(a.name.as_deref().unwrap_or("qa"), &pairs, matcher, &norm)?
        }
        Task::Ppl => {
            let texts = read_texts(&a.gold)?;
            let provider = a.model.provider()?;
            let tok = tokenizer(&a.model.tokenizer)?;
            let weighting = if a.doc_weighted { PplWeighting::Document } else { PplWeighting::Token };
            domain_perplexity(a.name.as_deref().unwrap_or("ppl"), provider.as_ref(), &texts, tok.as_ref(), weighting)?
        }
        Task::Lambada => {
            let items: Vec<LambadaItem> = read_records(&a.gold)?;
            let provider = a.model.provider()?;
            lambada_accuracy(a.name.as_deref().unwrap_or("lambada"), provider.as_ref(), &items, &norm, a.slack)?
        }
    };
    if a.csv {
        println!("{}", report.csv_row());
    }
    let mut summary = report.clone();
    if a.output.is_none() {
        summary.per_item = None;
    }
    write_json(&summary, a.output.as_deref())
}

#[derive(Args)]
pub struct ScorerArgs {
    /// `term<TAB>weight` lexicon for offline scoring.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Toxicity service base URL, used when no lexicon is given.
    #[arg(long, env = "TOXICITY_URL")]
    toxicity_url: Option<String>,
    /// Minimum milliseconds between scoring requests.
    #[arg(long, default_value_t = 0)]
    min_interval_ms: u64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

impl ScorerArgs {
    fn scorer(&self) -> Result<Box<dyn ToxicityScorer>> {
        match (&self.lexicon, &self.toxicity_url) {
            (Some(p), _) => Ok(Box::new(LexiconScorer::load(p)?)),
            (None, Some(url)) => Ok(Box::new(RemoteScorer::new(
                url,
                Default::default(),
                Duration::from_millis(self.min_interval_ms),
                self.batch_size,
            ))),
            (None, None) => Err(usage("need --lexicon or --toxicity-url (or TOXICITY_URL)")),
        }
    }
}

#[derive(Subcommand)]
pub enum ToxicityCommand {
    /// Split comments into prompt/continuation pairs.
    Build {
        /// Comments, one per line (JSON strings allowed).
        #[arg(long)]
        comments: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = DEFAULT_DELIMITERS)]
        delimiters: String,
    },
    /// Generate one continuation per prompt and count empty / non-Chinese outputs.
    Generate {
        /// Pairs JSONL from `build`, or prompts one per line.
        #[arg(long)]
        prompts: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 32)]
        max_new_tokens: usize,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 10)]
        retries: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fill prompt and continuation toxicity into generated records.
    Score {
        #[arg(long)]
        records: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
    },
    /// Linear fit of continuation toxicity on prompt toxicity.
    Trend {
        #[arg(long)]
        records: PathBuf,
    },
}

fn read_prompts(path: &PathBuf) -> Result<Vec<String>> {
    #[derive(serde::Deserialize)]
    struct P {
        prompt: String,
    }
    match read_records::<P>(path) {
        Ok(ps) => Ok(ps.into_iter().map(|p| p.prompt).collect()),
        Err(_) => read_lines(path),
    }
}

pub fn toxicity(c: ToxicityCommand) -> Result<()> {
    match c {
        ToxicityCommand::Build {
            comments,
            output,
            delimiters,
        } => {
            let comments = read_lines(&comments)?;
            let (pairs, report) = build_toxicity_prompts(&comments, &delimiters);
            write_records(&pairs, &output)?;
            write_json(&report, None)
        }
        ToxicityCommand::Generate {
            prompts,
            output,
            model,
            max_new_tokens,
            top_k,
            temperature,
            retries,
            seed,
        } => {
            let params = GenParams {
                max_new_tokens,
                top_k,
                temperature,
                seed,
                retry_on_empty: retries,
            };
            params.validate().map_err(|e| usage(e.to_string()))?;
            let prompts = read_prompts(&prompts)?;
            let provider = model.provider()?;
            let (records, quality) = run_continuations(provider.as_ref(), &prompts, &params)?;
            write_records(&records, &output)?;
            write_json(&quality, None)
        }
        ToxicityCommand::Score { records, output, scorer } => {
            let scorer = scorer.scorer()?;
            let mut recs: Vec<SafetyRecord> = read_records(&records)?;
            let prompts: Vec<String> = recs.iter().map(|r| r.prompt.clone()).collect();
            let scored: Vec<usize> = (0..recs.len())
                .filter(|&i| recs[i].failed.is_none() && !recs[i].continuation.trim().is_empty())
                .collect();
            let conts: Vec<String> = scored.iter().map(|&i| recs[i].continuation.clone()).collect();
            let ps = scorer.score_batch(&prompts).context("scoring prompts")?;
            let cs = scorer.score_batch(&conts).context("scoring continuations")?;
            for (r, p) in recs.iter_mut().zip(ps) {
                r.prompt_toxicity = Some(p);
            }
            for (&i, c) in scored.iter().zip(cs) {
                recs[i].continuation_toxicity = Some(c);
            }
            write_records(&recs, &output)?;
            println!("scored {} prompts and {} continuations", recs.len(), scored.len());
            Ok(())
        }
        ToxicityCommand::Trend { records } => {
            let recs: Vec<SafetyRecord> = read_records(&records)?;
            let pairs: Vec<(f64, f64)> = recs
                .iter()
                .filter_map(|r| Some((r.prompt_toxicity?, r.continuation_toxicity?)))
                .collect();
            write_json(&toxicity_trend(&pairs)?, None)
        }
    }
}

#[derive(Subcommand)]
pub enum BiasCommand {
    /// Most frequent words generated after templated prompts about each term.
    Cooc {
        /// Group terms, one per line.
        #[arg(long)]
        terms: PathBuf,
        /// Templates containing {term}, one per line; the two built-in templates when absent.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Stopwords, one per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        continuations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mean probability of the yes token for pro- and anti-stereotypical questions.
    Winobias {
        /// JSONL of {condition: pro|anti, prompt}.
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long, default_value = "是")]
        yes_token: String,
        /// Ask the provider for only the top M tokens.
        #[arg(long)]
        top_m: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct WinoSummary<'a> {
    yes_token: &'a str,
    conditions: &'a std::collections::BTreeMap<zhcurate::safety::Condition, zhcurate::safety::bias::ConditionMean>,
    truncation_warnings: usize,
}

pub fn bias(c: BiasCommand) -> Result<()> {
    match c {
        BiasCommand::Cooc {
            terms,
            templates,
            stopwords,
            continuations,
            seed,
            model,
            output,
        } => {
            let terms = read_lines(&terms)?;
            let templates = match templates {
                Some(p) => read_lines(&p)?,
                None => DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            };
            let cfg = CoocConfig {
                continuations_per_term: continuations,
                stopwords: stopwords.map(|p| read_lines(&p)).transpose()?.unwrap_or_default().into_iter().collect(),
                seed,
                ..CoocConfig::default()
            };
            let provider = model.provider()?;
            let result = cooccurrence_analysis(provider.as_ref(), &terms, &templates, &cfg).map_err(|e| usage(e.to_string()))?;
            write_json(&result, output.as_deref())
        }
        BiasCommand::Winobias {
            prompts,
            yes_token,
            top_m,
            model,
            output,
        } => {
            let prompts: Vec<WinoPrompt> = read_records(&prompts)?;
            let provider = model.provider()?;
            let report: WinoReport = winobias_yes_probability(provider.as_ref(), &prompts, &yes_token, top_m)?;
            if report.truncation_warnings > 0 {
                log::warn!("{} prompts lacked the yes token in the returned distribution", report.truncation_warnings);
            }
            match output {
                Some(p) => write_json(&report, Some(&p)),
                None => write_json(
                    &WinoSummary {
                        yes_token: &report.yes_token,
                        conditions: &report.conditions,
                        truncation_warnings: report.truncation_warnings,
                    },
                    None,
                ),
            }
        }
    }
}
