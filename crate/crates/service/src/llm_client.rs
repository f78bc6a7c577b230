//! HTTP language-model client.
//!
//! Sends `{"system_prompt": ..., "query": ...}` as JSON and expects
//! `{"output": "<model text>"}` back.

use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use nlstat_core::intent::{ClientError, LanguageModelClient};

pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(10);
pub const RETRIES: usize = 1;

#[derive(Serialize)]
struct Request<'a> {
    system_prompt: &'a str,
    query: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    output: String,
}

pub struct HttpLanguageModel {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
    // Built on first use: the blocking client must not be created on an
    // async runtime thread.
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
}

impl HttpLanguageModel {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self::with_timeout(endpoint, api_key, REQUEST_TIMEOUT)
    }

    pub fn with_timeout(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        HttpLanguageModel { endpoint: endpoint.into(), api_key, timeout, client: OnceLock::new() }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, ClientError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder().timeout(self.timeout).build().map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| ClientError::Transport(e.clone()))
    }

    fn attempt(&self, system_prompt: &str, query: &str) -> Result<String, ClientError> {
        let body = serde_json::to_vec(&Request { system_prompt, query })
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let mut req = self
            .client()?
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                ClientError::Timeout
            } else {
                ClientError::Transport(e.to_string())
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(classify)?;
        if !status.is_success() {
            return Err(ClientError::Transport(format!("endpoint returned {status}")));
        }
        let reply: Reply = serde_json::from_slice(&bytes)
            .map_err(|e| ClientError::Transport(format!("malformed endpoint reply: {e}")))?;
        Ok(reply.output)
    }
}

impl LanguageModelClient for HttpLanguageModel {
    fn complete(&self, system_prompt: &str, query: &str) -> Result<String, ClientError> {
        let mut last = self.attempt(system_prompt, query);
        for _ in 0..RETRIES {
            if last.is_ok() {
                break;
            }
            tracing::warn!("language model request failed, retrying: {}", last.as_ref().unwrap_err());
            last = self.attempt(system_prompt, query);
        }
        last
    }
}
