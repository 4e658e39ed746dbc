//! Browser bindings: mixture epoch solving, MinHash estimate against exact
//! Jaccard, and the document quality gate. Every export returns JSON text.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;
use zhcurate::dedup::{estimate_jaccard, exact_jaccard, minhash_signature, shingle, HashFamily, ShingleUnit};
use zhcurate::filter::{quality_check, Decision, QualityConfig};
use zhcurate::mixture::{parse_budget, MixtureSpec, BUDGET_1B};

#[derive(Serialize)]
struct EpochRow {
    subset: String,
    size_tokens: f64,
    proportion: f64,
    epochs: f64,
    stated: Option<f64>,
}

/// `spec` is TOML in the mixture-spec format; empty text means the reference mix.
pub fn mixture_json(spec: &str, budget: &str) -> Result<String, String> {
    let mut spec = if spec.trim().is_empty() {
        MixtureSpec::reference_mix(BUDGET_1B)
    } else {
        MixtureSpec::from_toml(spec).map_err(|e| e.to_string())?
    };
    if !budget.trim().is_empty() {
        spec = spec.with_budget(parse_budget(budget.trim()).map_err(|e| e.to_string())?);
    }
    spec.validate().map_err(|e| e.to_string())?;
    let epochs = spec.solved_epochs().map_err(|e| e.to_string())?;
    let rows: Vec<EpochRow> = epochs
        .into_iter()
        .zip(&spec.subsets)
        .map(|((subset, epochs), s)| EpochRow {
            subset,
            size_tokens: s.size_tokens,
            proportion: s.proportion,
            epochs,
            stated: s.epochs,
        })
        .collect();
    Ok(json!({ "budget_tokens": spec.budget_tokens, "rows": rows }).to_string())
}

pub fn minhash_json(a: &str, b: &str, k: usize, seed: u64) -> Result<String, String> {
    if k == 0 {
        return Err("k must be at least 1".into());
    }
    let sa = shingle(a, ShingleUnit::CharUnigram, None).map_err(|e| e.to_string())?;
    let sb = shingle(b, ShingleUnit::CharUnigram, None).map_err(|e| e.to_string())?;
    let exact = exact_jaccard(&sa, &sb).map_err(|e| e.to_string())?;
    let family = HashFamily::new(k, seed);
    let ga = minhash_signature(&sa, &family).map_err(|e| e.to_string())?;
    let gb = minhash_signature(&sb, &family).map_err(|e| e.to_string())?;
    let estimate = estimate_jaccard(&ga, &gb).map_err(|e| e.to_string())?;
    // three standard deviations of a k-sample binomial proportion
    let bound = 3.0 * (exact * (1.0 - exact) / k as f64).sqrt();
    Ok(json!({
        "shingles_a": sa.len(),
        "shingles_b": sb.len(),
        "exact": exact,
        "estimate": estimate,
        "bound": bound,
        "within_bound": (estimate - exact).abs() <= bound,
    })
    .to_string())
}

pub fn quality_json(text: &str, min_chinese_chars: usize, max_symbol_ratio: f64) -> Result<String, String> {
    let cfg = QualityConfig {
        min_chinese_chars,
        max_symbol_ratio,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let (decision, census) = quality_check(text, &cfg);
    let (verdict, reason) = match decision {
        Decision::Kept => ("kept", None),
        Decision::Dropped(r) => ("dropped", Some(r)),
    };
    Ok(json!({
        "verdict": verdict,
        "reason": reason,
        "chinese_chars": census.chinese,
        "symbols": census.symbols,
        "non_whitespace": census.non_whitespace,
        "symbol_ratio": census.symbol_ratio(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn solve_mixture(spec: &str, budget: &str) -> Result<String, JsError> {
    mixture_json(spec, budget).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare_minhash(a: &str, b: &str, k: usize, seed: u64) -> Result<String, JsError> {
    minhash_json(a, b, k, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn check_quality(text: &str, min_chinese_chars: usize, max_symbol_ratio: f64) -> Result<String, JsError> {
    quality_json(text, min_chinese_chars, max_symbol_ratio).map_err(|e| JsError::new(&e))
}
