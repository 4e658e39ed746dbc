//! Toxicity and bias measurement: prompt-set construction, continuation
//! generation with quality accounting, toxicity scoring and trend fits,
//! co-occurrence probes, and the yes-probability coreference probe.

pub mod bias;
pub mod continuations;
pub mod prompts;
pub mod scorer;
pub mod trend;

pub use bias::{cooccurrence_analysis, winobias_yes_probability, CoocConfig, Condition, WinoPrompt};
pub use continuations::{run_continuations, GenQuality, SafetyRecord};
pub use prompts::{build_toxicity_prompts, split_prompt_continuation, ConstructionReport, Origin, PromptContinuationPair};
pub use scorer::{score_toxicity, LexiconScorer, ToxicityScorer};
pub use trend::{toxicity_trend, TrendFit};
