use serde::{Deserialize, Serialize};

use crate::corpus::count_chinese;
use crate::lm::provider::{generate, GenParams, ModelProvider};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyRecord {
    pub prompt: String,
    pub continuation: String,
    pub model: String,
    pub attempts_used: u32,
    pub empty: bool,
    pub no_chinese: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_toxicity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation_toxicity: Option<f64>,
}

/// Continuation quality counts. `total` excludes failed requests; an empty
/// continuation is counted only as empty, and a non-empty one with no
/// Chinese character (punctuation-only included) as no_chinese.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenQuality {
    pub empty: usize,
    pub no_chinese: usize,
    pub total: usize,
    pub failed: usize,
}

fn prompt_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One continuation per prompt. Prompt `i` samples with a seed derived from
/// `params.seed` and `i`, so results do not depend on scheduling.
pub fn run_continuations<S: AsRef<str> + Sync>(
    provider: &dyn ModelProvider,
    prompts: &[S],
    params: &GenParams,
) -> crate::Result<(Vec<SafetyRecord>, GenQuality)> {
    params.validate()?;
    let model = provider.name();
    let indexed: Vec<(usize, &S)> = prompts.iter().enumerate().collect();
    let records: Vec<SafetyRecord> = par::map_slice(&indexed, |&(i, p)| {
        let prompt = p.as_ref();
        let mut rec = SafetyRecord {
            prompt: prompt.to_string(),
            continuation: String::new(),
            model: model.clone(),
            attempts_used: 0,
            empty: false,
            no_chinese: false,
            failed: None,
            prompt_toxicity: None,
            continuation_toxicity: None,
        };
        match generate(provider, prompt, &params.with_seed(prompt_seed(params.seed, i))) {
            Ok(g) => {
                rec.attempts_used = g.attempts_used;
                rec.empty = g.empty;
                rec.no_chinese = !g.empty && count_chinese(&g.text) == 0;
                rec.continuation = g.text;
            }
            Err(e) => {
                if let crate::Error::Provider { attempts, .. } = &e {
                    rec.attempts_used = *attempts;
                }
                rec.failed = Some(e.to_string());
            }
        }
        rec
    });
    let mut q = GenQuality::default();
    for r in &records {
        if r.failed.is_some() {
            q.failed += 1;
            continue;
        }
        q.total += 1;
        q.empty += usize::from(r.empty);
        q.no_chinese += usize::from(r.no_chinese);
    }
    Ok((records, q))
}
