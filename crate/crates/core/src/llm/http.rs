use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionParams, LlmBackend, LlmError, Prompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Full chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: "http://localhost:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

/// OpenAI-style chat-completions client. The key comes from `LLM_API_KEY`.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    slots: Mutex<usize>,
    freed: Condvar,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        Self {
            api_key: std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty()),
            agent,
            slots: Mutex::new(config.max_in_flight.max(1)),
            freed: Condvar::new(),
            config,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.slots.lock().expect("slot lock");
        while *free == 0 {
            free = self.freed.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard { backend: self }
    }

    fn request_body(&self, prompt: &Prompt, params: &CompletionParams) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": prompt.messages,
            "temperature": params.temperature,
        });
        if let Some(m) = params.max_tokens {
            body["max_tokens"] = m.into();
        }
        if let Some(s) = params.seed {
            body["seed"] = s.into();
        }
        body
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, (LlmError, bool)> {
        let mut req = self.agent.post(&self.config.url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => {
                let value: serde_json::Value =
                    resp.into_json().map_err(|e| (LlmError::BadResponse(e.to_string()), false))?;
                value["choices"][0]["message"]["content"]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| (LlmError::BadResponse("no choices[0].message.content".into()), false))
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                let transient = status == 429 || status >= 500;
                Err((LlmError::Status { status, body }, transient))
            }
            Err(ureq::Error::Transport(t)) => {
                let text = t.to_string();
                if text.contains("timed out") {
                    Err((LlmError::Timeout, true))
                } else {
                    Err((LlmError::Transport(text), true))
                }
            }
        }
    }
}

struct SlotGuard<'a> {
    backend: &'a HttpBackend,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.backend.slots.lock().expect("slot lock") += 1;
        self.backend.freed.notify_one();
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, prompt: &Prompt, params: &CompletionParams) -> Result<String, LlmError> {
        let body = self.request_body(prompt, params);
        let _slot = self.acquire();
        let mut retry = 0;
        loop {
            match self.attempt(&body) {
                Ok(content) => return Ok(content),
                Err((err, transient)) if transient && retry < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << retry.min(16));
                    tracing::warn!(error = %err, retry, wait_ms = wait, "retrying chat completion");
                    std::thread::sleep(Duration::from_millis(wait));
                    retry += 1;
                }
                Err((err, _)) => return Err(err),
            }
        }
    }
}
