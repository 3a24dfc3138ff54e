use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::ChatMessage;
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// A chat-completion service.
pub trait ChatBackend: Send + Sync {
    fn model(&self) -> &str;

    /// The text of the first returned choice.
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingSettings {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingSettings {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 5,
        }
    }
}

/// Connection settings of an OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub decoding: DecodingSettings,
    pub timeout_secs: u64,
    /// Attempts after the first for transport errors, 429 and 5xx responses.
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub requests_per_minute: f64,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo-1106".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            decoding: DecodingSettings::default(),
            timeout_secs: 60,
            max_retries: 4,
            backoff_ms: 500,
            max_in_flight: 4,
            requests_per_minute: 300.0,
        }
    }
}

/// Token bucket: `capacity` requests in a burst, refilled continuously.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: f64, capacity: f64) -> Self {
        Self {
            capacity,
            per_second: requests / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available and takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_second).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking client for `POST {endpoint}/chat/completions`.
pub struct OpenAiChat {
    settings: RemoteSettings,
    api_key: String,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

impl OpenAiChat {
    /// Reads the credential from the configured environment variable.
    pub fn from_env(settings: RemoteSettings) -> Result<Self> {
        let key = std::env::var(&settings.api_key_env).map_err(|_| {
            Error::Config(format!(
                "remote classifier needs a credential in ${}",
                settings.api_key_env
            ))
        })?;
        Self::new(settings, key)
    }

    pub fn new(settings: RemoteSettings, api_key: String) -> Result<Self> {
        if settings.endpoint.is_empty() || settings.model.is_empty() {
            return Err(Error::Config("remote classifier needs an endpoint and a model id".into()));
        }
        if !(settings.requests_per_minute > 0.0) {
            return Err(Error::Config("requests_per_minute must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| Error::Backend(format!("cannot build HTTP client: {e}")))?;
        let limiter = RateLimiter::per_minute(settings.requests_per_minute, settings.max_in_flight.max(1) as f64);
        Ok(Self {
            settings,
            api_key,
            client,
            limiter,
        })
    }

    fn attempt(&self, url: &str, body: &RequestBody<'_>) -> std::result::Result<String, (bool, String)> {
        self.limiter.acquire();
        let response = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| (true, format!("request failed: {e}")))?;
        let status = response.status();
        let text = response.text().map_err(|e| (true, format!("reading response failed: {e}")))?;
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err((retryable, format!("HTTP {status}: {}", text.chars().take(300).collect::<String>())));
        }
        let parsed: ResponseBody =
            serde_json::from_str(&text).map_err(|e| (false, format!("unexpected response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| (false, "response has no message content".to_string()))
    }
}

impl ChatBackend for OpenAiChat {
    fn model(&self) -> &str {
        &self.settings.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let url = format!("{}/chat/completions", self.settings.endpoint.trim_end_matches('/'));
        let body = RequestBody {
            model: &self.settings.model,
            messages,
            temperature: self.settings.decoding.temperature,
            max_tokens: self.settings.decoding.max_tokens,
        };
        let mut delay = Duration::from_millis(self.settings.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&url, &body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    if !retryable || attempt >= self.settings.max_retries {
                        return Err(Error::Backend(format!("{msg} (after {} attempts)", attempt + 1)));
                    }
                    log::warn!("chat request failed, retrying: {msg}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

/// Raw model outputs keyed by a hash of the model id and the exact messages.
/// Memory-only when no directory is given.
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            memory: Mutex::new(HashMap::new()),
        }
    }

    /// Content hash of the request; `salt` distinguishes deliberate repeats.
    pub fn key(model: &str, messages: &[ChatMessage], salt: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(messages).expect("messages serialize"));
        h.update([0]);
        h.update(salt.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.txt")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(v) = self.memory.lock().expect("cache lock").get(key) {
            return Some(v.clone());
        }
        let text = std::fs::read_to_string(self.path(key)?).ok()?;
        self.memory.lock().expect("cache lock").insert(key.to_string(), text.clone());
        Some(text)
    }

    pub fn put(&self, key: &str, value: &str) -> Result<()> {
        if let Some(p) = self.path(key) {
            write_atomic(&p, value.as_bytes())?;
        }
        self.memory.lock().expect("cache lock").insert(key.to_string(), value.to_string());
        Ok(())
    }
}
