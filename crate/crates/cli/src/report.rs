use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use zhcurate::eval::EvalReport;
use zhcurate::mixture::MixtureReport;
use zhcurate::pipeline::RunReport;

use crate::common::usage;

#[derive(Args)]
pub struct ReportArgs {
    /// report.json from a pipeline run, a mixture report, or evaluation
    /// reports (one file per model; the file stem names the column).
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

pub fn print_run(r: &RunReport) {
    println!("config {}  seed {}", &r.config_hash[..12.min(r.config_hash.len())], r.seed);
    println!(
        "{:<11} {:>9} {:>9} {:>9} {:>11} {:>9} {:>13} {:>13}",
        "stage", "in", "kept", "dropped", "transformed", "skipped", "tokens in", "tokens out"
    );
    for s in &r.stages {
        let name = s.stage.map(|s| s.to_string()).unwrap_or_default();
        println!(
            "{:<11} {:>9} {:>9} {:>9} {:>11} {:>9} {:>13} {:>13}",
            name, s.input_docs, s.kept, s.dropped, s.transformed, s.skipped, s.input_tokens, s.output_tokens
        );
        for (reason, n) in &s.dropped_by_reason {
            println!("  {reason}: {n}");
        }
    }
    println!("{} -> {} documents, {} -> {} tokens", r.input_docs, r.output_docs, r.input_tokens, r.output_tokens);
    if let Some(d) = &r.dedup {
        println!(
            "dedup: {} clusters, {} documents in clusters ({:.2}%), {}",
            d.clusters,
            d.duplicate_docs,
            d.duplicate_fraction * 100.0,
            if d.dropped { "dropped" } else { "report only" }
        );
    }
    if let Some(p) = &r.ppl {
        println!(
            "ppl: cutoff {:.3}, removed {:.2}% of {} tokens",
            p.cutoff,
            p.removed_token_fraction * 100.0,
            p.total_tokens
        );
    }
}

fn print_mixture(r: &MixtureReport) {
    println!("{:<16} {:>14} {:>14} {:>8} {:>8}", "subset", "target", "realized", "epochs", "share");
    for (name, s) in &r.subsets {
        println!(
            "{:<16} {:>14.0} {:>14} {:>8.2} {:>7.2}%",
            name,
            s.target_tokens,
            s.realized_tokens,
            s.realized_epochs,
            s.share * 100.0
        );
    }
    println!("total {} tokens, seed {}", r.total_tokens, r.seed);
}

/// Tasks down the side, one column per file.
fn print_evals(columns: &[(String, Vec<EvalReport>)]) {
    let mut rows: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for (c, (_, reports)) in columns.iter().enumerate() {
        for r in reports {
            let metric = serde_json::to_value(r.metric).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            rows.entry(format!("{} ({metric})", r.task)).or_default().insert(c, r.value);
        }
    }
    print!("{:<32}", "task");
    for (name, _) in columns {
        print!(" {name:>14}");
    }
    println!();
    for (task, vals) in rows {
        print!("{task:<32}");
        for c in 0..columns.len() {
            match vals.get(&c) {
                Some(v) => print!(" {v:>14.4}"),
                None => print!(" {:>14}", "-"),
            }
        }
        println!();
    }
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut evals = Vec::new();
    for path in &a.files {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if let Ok(r) = serde_json::from_value::<RunReport>(value.clone()) {
            print_run(&r);
        } else if let Ok(r) = serde_json::from_value::<MixtureReport>(value.clone()) {
            print_mixture(&r);
        } else if let Ok(r) = serde_json::from_value::<Vec<EvalReport>>(value.clone()) {
            evals.push((stem(path), r));
        } else if let Ok(r) = serde_json::from_value::<EvalReport>(value) {
            evals.push((stem(path), vec![r]));
        } else {
            return Err(usage(format!("{}: not a run, mixture or evaluation report", path.display())));
        }
    }
    if !evals.is_empty() {
        print_evals(&evals);
    }
    Ok(())
}

fn stem(p: &std::path::Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("?").to_string()
}
