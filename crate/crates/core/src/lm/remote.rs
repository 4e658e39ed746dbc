//! Client for an external inference server.
//!
//! ```text
//! POST /v1/generate   {prompt, max_new_tokens, top_k, temperature, seed} -> {text}
//! POST /v1/logprobs   {tokens: [..]}                                    -> {logprobs: [..]}
//! POST /v1/next_token {prompt, top_m}                                   -> {tokens: [..], probs: [..]}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{Failure, JsonClient, RetryPolicy};
use crate::lm::provider::{GenParams, ModelProvider};
use crate::lm::TokenLogProbs;

pub struct RemoteProvider {
    client: JsonClient,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_new_tokens: usize,
    top_k: Option<usize>,
    temperature: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Serialize)]
struct LogprobsRequest<'a> {
    tokens: &'a [String],
}

#[derive(Deserialize)]
struct LogprobsResponse {
    logprobs: Vec<f64>,
}

#[derive(Serialize)]
struct NextTokenRequest<'a> {
    prompt: &'a str,
    top_m: Option<usize>,
}

#[derive(Deserialize)]
struct NextTokenResponse {
    tokens: Vec<String>,
    probs: Vec<f64>,
}

fn provider_error(f: Failure) -> Error {
    Error::Provider {
        attempts: f.attempts,
        message: f.message,
    }
}

impl RemoteProvider {
    pub fn new(base_url: &str, policy: RetryPolicy) -> Self {
        RemoteProvider {
            client: JsonClient::new(base_url, policy),
        }
    }
}

impl TokenLogProbs for RemoteProvider {
    fn token_logprobs(&self, tokens: &[String]) -> Result<Vec<f64>> {
        let resp: LogprobsResponse = self
            .client
            .post("/v1/logprobs", &LogprobsRequest { tokens })
            .map_err(provider_error)?;
        if resp.logprobs.len() != tokens.len() {
            return Err(Error::Provider {
                attempts: 1,
                message: format!("expected {} logprobs, got {}", tokens.len(), resp.logprobs.len()),
            });
        }
        Ok(resp.logprobs)
    }
}

impl ModelProvider for RemoteProvider {
    fn name(&self) -> String {
        format!("remote:{}", self.client.base_url())
    }

    fn generate_once(&self, prompt: &str, params: &GenParams) -> Result<String> {
        let req = GenerateRequest {
            prompt,
            max_new_tokens: params.max_new_tokens,
            top_k: params.top_k,
            temperature: params.temperature,
            seed: params.seed,
        };
        let resp: GenerateResponse = self.client.post("/v1/generate", &req).map_err(provider_error)?;
        Ok(resp.text)
    }

    fn next_token_distribution(&self, prompt: &str, top_m: Option<usize>) -> Result<Vec<(String, f64)>> {
        let resp: NextTokenResponse = self
            .client
            .post("/v1/next_token", &NextTokenRequest { prompt, top_m })
            .map_err(provider_error)?;
        if resp.tokens.len() != resp.probs.len() {
            return Err(Error::Provider {
                attempts: 1,
                message: "tokens and probs differ in length".into(),
            });
        }
        if resp.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Provider {
                attempts: 1,
                message: "probability outside [0, 1]".into(),
            });
        }
        Ok(resp.tokens.into_iter().zip(resp.probs).collect())
    }
}
