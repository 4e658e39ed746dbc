//! Traditional Chinese corpus curation: document pipeline stages, near-duplicate
//! detection, n-gram perplexity filtering, mixture accounting, benchmark
//! scoring, and toxicity/bias probes against pluggable model providers.

pub mod corpus;
pub mod dedup;
pub mod eval;
pub mod error;
pub mod filter;
#[cfg(feature = "remote")]
pub mod http;
pub mod lm;
pub mod mixture;
pub mod normalize;
pub mod pipeline;
pub mod safety;
mod par;
pub mod segment;

pub use corpus::{CorpusStats, Document, Stage, StageMark, Verdict};
pub use error::{Error, Result};
