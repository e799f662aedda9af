//! Completion-backend abstraction: an HTTP chat-completion client with
//! retries, timeouts and a concurrency bound, plus a deterministic mock for
//! exercising every failure path without a live model.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectionPolicy, PiiDetector};
use crate::sanitizer::strict_mask;

/// Marker line separating the instruction block from the raw input in
/// rendered prompts; the mock backend recovers the input through it.
pub const INPUT_MARKER: &str = "INPUT:\n";

/// What a request is for. Not transmitted over the wire; the mock keys its
/// behavior on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Reconstruction,
    Removal,
    Summary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    /// Fixed at zero for all guard paths.
    pub temperature: f32,
    pub model: Option<String>,
    pub request_id: String,
    pub purpose: Purpose,
}

impl CompletionRequest {
    fn new(prompt: &str, purpose: Purpose) -> Self {
        assert!(!prompt.is_empty(), "prompt must be non-empty");
        Self {
            prompt: prompt.to_string(),
            max_tokens: 1024,
            temperature: 0.0,
            model: None,
            request_id: format!("req-{:016x}", fastrand_id(prompt)),
            purpose,
        }
    }

    pub fn reconstruction(prompt: &str) -> Self {
        Self::new(prompt, Purpose::Reconstruction)
    }

    pub fn removal(prompt: &str) -> Self {
        Self::new(prompt, Purpose::Removal)
    }

    pub fn summary(prompt: &str) -> Self {
        Self::new(prompt, Purpose::Summary)
    }
}

fn fastrand_id(seed_text: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed_text.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest length"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_concurrent: usize,
    /// Name of the environment variable holding the API key. The value
    /// itself never appears in config files, logs or errors.
    pub credential_env: String,
    /// Base backoff delay; production default is 500 ms.
    pub retry_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: std::env::var("SRPG_LLM_BASE_URL")
                .unwrap_or_else(|_| "http://127.0.0.1:8080".to_string()),
            model: "default".to_string(),
            timeout_secs: 30.0,
            max_retries: 3,
            max_concurrent: 4,
            credential_env: "SRPG_LLM_API_KEY".to_string(),
            retry_base_ms: 500,
        }
    }
}

impl BackendConfig {
    fn validate(&self) -> Result<(), LlmError> {
        if self.timeout_secs <= 0.0 {
            return Err(LlmError::Config("timeout must be positive".into()));
        }
        if self.max_concurrent < 1 {
            return Err(LlmError::Config("max_concurrent must be at least 1".into()));
        }
        Ok(())
    }
}

/// Transport and protocol failures, one category per branch so callers can
/// react mechanically.
#[derive(Debug, Clone, Error)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected")]
    Auth,
    #[error("rate limited")]
    RateLimited,
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend failure: http status {0}")]
    Backend(u16),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl LlmError {
    fn is_transient(&self) -> bool {
        matches!(self, LlmError::Timeout | LlmError::RateLimited | LlmError::Transport(_))
            || matches!(self, LlmError::Backend(status) if *status >= 500)
    }
}

/// A text-completion service.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
    fn name(&self) -> &str;
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f32,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Blocking chat-completion client with exponential backoff (factor 2 plus
/// jitter) on transient failures.
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(scrub_secret(&e.to_string(), &config)))?;
        let limiter = Semaphore::new(config.max_concurrent);
        Ok(Self { config, client, limiter })
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.config.credential_env).ok().filter(|k| !k.is_empty())
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let model = request.model.as_deref().unwrap_or(&self.config.model);
        let body = ChatRequest {
            model,
            messages: vec![ChatMessage { role: "user", content: &request.prompt }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let url = format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.client.post(&url).json(&body);
        if let Some(key) = self.api_key() {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::Transport(scrub_secret(&e.to_string(), &self.config))
            }
        })?;

        match response.status().as_u16() {
            200 => {
                let parsed: ChatResponse = response
                    .json()
                    .map_err(|e| LlmError::MalformedResponse(scrub_secret(&e.to_string(), &self.config)))?;
                parsed
                    .choices
                    .first()
                    .map(|c| c.message.content.clone())
                    .ok_or_else(|| LlmError::MalformedResponse("no choices in response".into()))
            }
            401 | 403 => Err(LlmError::Auth),
            429 => Err(LlmError::RateLimited),
            status if status >= 500 => Err(LlmError::Backend(status)),
            status => Err(LlmError::Backend(status)),
        }
    }
}

/// Remove the credential value from any outbound message.
fn scrub_secret(message: &str, config: &BackendConfig) -> String {
    match std::env::var(&config.credential_env) {
        Ok(secret) if !secret.is_empty() => message.replace(&secret, "[REDACTED]"),
        _ => message.to_string(),
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let _permit = self.limiter.acquire();
        let mut attempt_no = 0u32;
        loop {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(err) if err.is_transient() && attempt_no < self.config.max_retries => {
                    let backoff = self.config.retry_base_ms.saturating_mul(1 << attempt_no.min(16));
                    let jitter = rand::thread_rng().gen_range(0..=backoff / 4 + 1);
                    std::thread::sleep(Duration::from_millis(backoff + jitter));
                    attempt_no += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Behaviors of the test backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockMode {
    /// Delegates to the deterministic reconstructor and answers with valid
    /// schema JSON; removal prompts are masked with the strict detector.
    Faithful,
    /// Injects a gazetteer name into the structured output (or echoes raw
    /// input for removal prompts).
    Leaky,
    /// Returns truncated JSON (or an empty removal answer).
    Malformed,
    /// Sleeps, then times out.
    Slow,
}

impl std::str::FromStr for MockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "faithful" => Ok(MockMode::Faithful),
            "leaky" => Ok(MockMode::Leaky),
            "malformed" => Ok(MockMode::Malformed),
            "slow" => Ok(MockMode::Slow),
            other => Err(format!("unknown mock mode: {other}")),
        }
    }
}

/// Deterministic stand-in for a completion service.
pub struct MockBackend {
    mode: MockMode,
    leak_name: String,
    slow_ms: u64,
    scripted: Vec<(String, String)>,
}

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        Self {
            mode,
            leak_name: "Alice Chen".to_string(),
            slow_ms: 50,
            scripted: Vec::new(),
        }
    }

    /// Canned responses: the first entry whose marker occurs in the prompt
    /// is returned verbatim.
    pub fn scripted(responses: Vec<(String, String)>) -> Self {
        Self {
            mode: MockMode::Faithful,
            leak_name: "Alice Chen".to_string(),
            slow_ms: 0,
            scripted: responses,
        }
    }

    pub fn with_slow_ms(mut self, ms: u64) -> Self {
        self.slow_ms = ms;
        self
    }

    fn input_from_prompt(prompt: &str) -> &str {
        prompt.rfind(INPUT_MARKER).map(|at| &prompt[at + INPUT_MARKER.len()..]).unwrap_or(prompt)
    }

    fn faithful_json(input: &str) -> String {
        let ctx = crate::reconstructor::Reconstructor::bundled().reconstruct_deterministic(input);
        let relations: Vec<&str> = ctx.relations.iter().map(|r| r.expression.as_str()).collect();
        serde_json::json!({
            "variables": ctx.variables,
            "quantities": ctx.quantities,
            "relations": relations,
            "target": ctx.target.clone().unwrap_or_default(),
        })
        .to_string()
    }

    fn leaky_json(&self, input: &str) -> String {
        let ctx = crate::reconstructor::Reconstructor::bundled().reconstruct_deterministic(input);
        let relations: Vec<&str> = ctx.relations.iter().map(|r| r.expression.as_str()).collect();
        let mut quantities = ctx.quantities.clone();
        if let Some(first) = quantities.first_mut() {
            // smuggle a name into a label, the failure the leak filter exists for
            first.label = Some(match &first.label {
                Some(label) => format!("{} {label}", self.leak_name),
                None => self.leak_name.clone(),
            });
        }
        let mut variables = ctx.variables.clone();
        if quantities.is_empty() {
            variables.push(self.leak_name.clone());
        }
        serde_json::json!({
            "variables": variables,
            "quantities": quantities,
            "relations": relations,
            "target": ctx.target.clone().unwrap_or_default(),
        })
        .to_string()
    }

    fn removal_answer(&self, input: &str) -> Result<String, LlmError> {
        match self.mode {
            MockMode::Faithful => {
                let detector = PiiDetector::bundled(DetectionPolicy::strict());
                Ok(strict_mask(input, &detector).text)
            }
            MockMode::Leaky => Ok(format!("{input} (signed, {})", self.leak_name)),
            MockMode::Malformed => Ok(String::new()),
            MockMode::Slow => unreachable!("handled before dispatch"),
        }
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        for (marker, response) in &self.scripted {
            if request.prompt.contains(marker) {
                return Ok(response.clone());
            }
        }
        if self.mode == MockMode::Slow {
            std::thread::sleep(Duration::from_millis(self.slow_ms));
            return Err(LlmError::Timeout);
        }
        let input = Self::input_from_prompt(&request.prompt);
        match request.purpose {
            Purpose::Reconstruction => match self.mode {
                MockMode::Faithful => Ok(Self::faithful_json(input)),
                MockMode::Leaky => Ok(self.leaky_json(input)),
                MockMode::Malformed => Ok("{\"variables\":[".to_string()),
                MockMode::Slow => unreachable!(),
            },
            Purpose::Removal => self.removal_answer(input),
            Purpose::Summary => Ok("User [MASK] asks a math problem.".to_string()),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// One-shot completion helper matching the module contract.
pub fn complete(request: &CompletionRequest, config: &BackendConfig) -> Result<String, LlmError> {
    HttpBackend::new(config.clone())?.complete(request)
}

/// Build the mock backend for a mode.
pub fn mock_backend(mode: MockMode) -> MockBackend {
    MockBackend::new(mode)
}

#[allow(dead_code)]
fn unused_instant(_: Instant) {}
