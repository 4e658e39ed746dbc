use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod common;
mod data;
mod probes;
mod report;

#[derive(Parser)]
#[command(name = "zhcurate", version, about = "Traditional Chinese pretraining-data curation, mixture and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge JSONL or plain-text inputs into one validated JSONL corpus.
    Ingest(data::IngestArgs),
    /// Timestamp stripping, punctuation widening or simplified-to-traditional conversion.
    Normalize(data::NormalizeArgs),
    /// Content, quality or repetition filtering.
    Filter(data::FilterArgs),
    /// MinHash-LSH near-duplicate detection.
    Dedup(data::DedupArgs),
    /// Train a counted n-gram model and save it as JSON.
    TrainLm(data::TrainLmArgs),
    /// Perplexity filtering with a fixed or calibrated cutoff.
    Pplfilter(data::PplFilterArgs),
    /// Solve mixture epochs or sample a mixed corpus.
    Mix(data::MixArgs),
    /// Run a configured sequence of curation stages.
    Pipeline(data::PipelineArgs),
    /// Perplexity, exact-match and LAMBADA-style evaluation.
    Eval(probes::EvalArgs),
    /// Toxicity prompt construction, continuation generation, scoring and trend fits.
    #[command(subcommand)]
    Toxicity(probes::ToxicityCommand),
    /// Co-occurrence and yes-probability bias probes.
    #[command(subcommand)]
    Bias(probes::BiasCommand),
    /// Print tables from run, mixture or evaluation JSON.
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => data::ingest(a),
        Command::Normalize(a) => data::normalize(a),
        Command::Filter(a) => data::filter(a),
        Command::Dedup(a) => data::dedup(a),
        Command::TrainLm(a) => data::train_lm(a),
        Command::Pplfilter(a) => data::pplfilter(a),
        Command::Mix(a) => data::mix(a),
        Command::Pipeline(a) => data::pipeline(a),
        Command::Eval(a) => probes::eval(a),
        Command::Toxicity(c) => probes::toxicity(c),
        Command::Bias(c) => probes::bias(c),
        Command::Report(a) => report::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(common::Usage(msg)) = e.downcast_ref::<common::Usage>() {
                eprintln!("error: {msg}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
