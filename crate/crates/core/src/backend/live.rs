//! OpenAI-style chat-completions client.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{BackendDescriptor, BackendError, ChatBackend, ChatRequest};

pub struct LiveBackend {
    client: Client,
    url: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl LiveBackend {
    pub fn new(desc: &BackendDescriptor) -> Result<Self, BackendError> {
        let endpoint = desc
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::Config("live backend needs an endpoint".into()))?;
        let model = desc
            .model_name
            .clone()
            .ok_or_else(|| BackendError::Config("live backend needs a model name".into()))?;
        let client = Client::builder()
            .timeout(desc.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: completions_url(&endpoint),
            model,
            api_key: desc.api_key.clone(),
            temperature: desc.temperature,
            max_retries: desc.max_retries,
            backoff: Duration::from_millis(250),
        })
    }

    #[cfg(test)]
    fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, Attempt> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                { "role": "system", "content": request.system_prompt },
                { "role": "user", "content": request.user_prompt },
            ],
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .json()
            .map_err(|e| Attempt::Fatal(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Attempt::Fatal("response has no choices[0].message.content".into()))
    }
}

impl ChatBackend for LiveBackend {
    fn chat(&self, request: &ChatRequest, _occurrence: u32) -> Result<String, BackendError> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(msg)) => return Err(BackendError::Failure(msg)),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(BackendError::Failure(format!(
            "gave up after {} attempts: {last}",
            self.max_retries + 1
        )))
    }
}

/// Accept either a base URL (".../v1") or the full completions path.
fn completions_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    }
}
