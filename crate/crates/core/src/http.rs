//! Blocking JSON-over-HTTP with bounded retries, shared by the remote
//! inference provider and the remote toxicity scorer.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total attempts per request (at least 1).
    pub max_attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
        }
    }
}

pub(crate) struct JsonClient {
    agent: ureq::Agent,
    base: String,
    policy: RetryPolicy,
}

/// Failure after `attempts` tries.
pub(crate) struct Failure {
    pub attempts: u32,
    pub message: String,
}

impl JsonClient {
    pub fn new(base_url: &str, policy: RetryPolicy) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(policy.timeout))
            .build();
        JsonClient {
            agent: ureq::Agent::new_with_config(config),
            base: base_url.trim_end_matches('/').to_string(),
            policy,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// Retries transport errors, 429 and 5xx with doubling backoff; other
    /// 4xx responses fail immediately.
    pub fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, Failure> {
        let url = format!("{}{}", self.base, path);
        let max = self.policy.max_attempts.max(1);
        let mut wait = self.policy.backoff;
        let mut message = String::new();
        for attempt in 1..=max {
            match self.agent.post(&url).send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp.body_mut().read_json::<T>().map_err(|e| Failure {
                            attempts: attempt,
                            message: format!("{url}: bad response body: {e}"),
                        });
                    }
                    message = format!("{url}: HTTP {status}");
                    if status != 429 && status < 500 {
                        return Err(Failure {
                            attempts: attempt,
                            message,
                        });
                    }
                }
                Err(e) => message = format!("{url}: {e}"),
            }
            if attempt < max {
                std::thread::sleep(wait);
                wait *= 2;
            }
        }
        Err(Failure { attempts: max, message })
    }
}
