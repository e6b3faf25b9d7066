//! Chat-completion client with retries, rate limiting and a content-addressed
//! record/replay cache.

mod cache;
mod transport;

use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

pub use cache::{canonical_request, canonical_value, CacheKey, CachedExchange, ResponseCache, INDEX_FILE};
pub use transport::{Clock, HttpResponse, ManualClock, RateLimiter, SystemClock, Transport, UreqTransport};

use crate::corpus::PatientTopic;
use crate::prompts::{DecodingParams, Message, PromptError, PromptStrategy, Role};

pub const ENV_ENDPOINT: &str = "CTLAB_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "CTLAB_LLM_API_KEY";
pub const ENV_MODEL: &str = "CTLAB_LLM_MODEL";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("replay cache has no response for key {key}")]
    ReplayMiss { key: CacheKey },
    #[error("HTTP {status} from provider: {body}")]
    Http { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed provider response ({message}): {body}")]
    MalformedResponse { message: String, body: String },
    #[error("cache: {0}")]
    Cache(String),
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl FromStr for GatewayMode {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(GatewayError::Config(format!("unknown gateway mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    /// 0 disables rate limiting.
    pub requests_per_minute: u32,
    /// Retries after the first attempt on 429, 5xx and transport failures.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: String::new(),
            api_key: None,
            model: String::new(),
            requests_per_minute: 60,
            max_retries: 5,
            initial_backoff: Duration::from_secs(1),
            max_backoff: Duration::from_secs(60),
            timeout: Duration::from_secs(120),
        }
    }
}

impl GatewayConfig {
    /// Fills endpoint, key and model from the environment where unset.
    pub fn with_env(mut self) -> Self {
        let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if self.endpoint.is_empty() {
            self.endpoint = env(ENV_ENDPOINT).unwrap_or_default();
        }
        if self.api_key.is_none() {
            self.api_key = env(ENV_API_KEY);
        }
        if self.model.is_empty() {
            self.model = env(ENV_MODEL).unwrap_or_default();
        }
        self
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(30));
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

/// Executes chat requests in one of three modes. Replay mode never constructs
/// or touches a transport.
pub struct Gateway {
    mode: GatewayMode,
    config: GatewayConfig,
    cache: Option<Arc<ResponseCache>>,
    transport: Option<Arc<dyn Transport>>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
}

impl Gateway {
    pub fn replay(config: GatewayConfig, cache: Arc<ResponseCache>) -> Result<Self, GatewayError> {
        Self::build(GatewayMode::Replay, config, Some(cache), None, Arc::new(SystemClock::default()))
    }

    /// Live or record mode over HTTP.
    pub fn http(
        mode: GatewayMode,
        config: GatewayConfig,
        cache: Option<Arc<ResponseCache>>,
    ) -> Result<Self, GatewayError> {
        if mode == GatewayMode::Replay {
            return Self::replay(
                config,
                cache.ok_or_else(|| GatewayError::Config("replay mode needs a cache".into()))?,
            );
        }
        let transport = Arc::new(UreqTransport::new(config.timeout));
        Self::build(mode, config, cache, Some(transport), Arc::new(SystemClock::default()))
    }

    /// Fully injected construction, used by tests and fixture recording.
    pub fn with_transport(
        mode: GatewayMode,
        config: GatewayConfig,
        cache: Option<Arc<ResponseCache>>,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        let transport = (mode != GatewayMode::Replay).then_some(transport);
        Self::build(mode, config, cache, transport, clock)
    }

    fn build(
        mode: GatewayMode,
        config: GatewayConfig,
        cache: Option<Arc<ResponseCache>>,
        transport: Option<Arc<dyn Transport>>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        if config.model.is_empty() {
            return Err(GatewayError::Config(format!("model id is not set (config or {ENV_MODEL})")));
        }
        match mode {
            GatewayMode::Replay | GatewayMode::Record if cache.is_none() => {
                return Err(GatewayError::Config(format!("{mode:?} mode needs a cache directory")));
            }
            GatewayMode::Live | GatewayMode::Record if config.endpoint.is_empty() => {
                return Err(GatewayError::Config(format!("endpoint is not set (config or {ENV_ENDPOINT})")));
            }
            _ => {}
        }
        let limiter = RateLimiter::new(config.requests_per_minute);
        Ok(Gateway { mode, config, cache, transport, clock, limiter })
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    pub fn key_for(&self, messages: &[Message], params: &DecodingParams) -> CacheKey {
        CacheKey::compute(&self.config.model, params, messages)
    }

    /// One completion. Record mode persists the exchange before returning.
    pub fn chat(&self, messages: &[Message], params: &DecodingParams) -> Result<String, GatewayError> {
        let ex = self.exchange(messages, params)?;
        if self.mode == GatewayMode::Record {
            self.cache().put(&ex)?;
        }
        Ok(ex.response_text)
    }

    /// Runs every turn of `strategy` in one fresh conversation. In record mode
    /// the exchanges are written only once all turns have succeeded.
    pub fn run_conversation(
        &self,
        strategy: &PromptStrategy,
        note: &PatientTopic,
    ) -> Result<Conversation, GatewayError> {
        let mut replies: Vec<String> = Vec::new();
        let mut exchanges = Vec::new();
        for _ in 0..strategy.turn_count() {
            let messages = strategy.render_turn(note, &replies)?;
            let ex = self.exchange(&messages, &strategy.params)?;
            replies.push(ex.response_text.clone());
            exchanges.push(ex);
        }
        if self.mode == GatewayMode::Record {
            self.cache().put_all(&exchanges)?;
        }
        Ok(Conversation { keys: exchanges.into_iter().map(|e| e.key).collect(), replies })
    }

    fn cache(&self) -> &ResponseCache {
        self.cache.as_deref().expect("mode validated at construction")
    }

    fn exchange(&self, messages: &[Message], params: &DecodingParams) -> Result<CachedExchange, GatewayError> {
        if messages.first().map(|m| m.role) != Some(Role::System) {
            return Err(GatewayError::InvalidRequest("first message must carry the system role".into()));
        }
        params.validate()?;
        let key = self.key_for(messages, params);
        if self.mode == GatewayMode::Replay {
            return self.cache().get(&key)?.ok_or(GatewayError::ReplayMiss { key });
        }
        let (text, body) = self.call(messages, params)?;
        let mut ex = CachedExchange::new(&self.config.model, params, messages, text, self.clock.unix_secs());
        ex.provider_metadata = provider_metadata(&body);
        Ok(ex)
    }

    fn call(&self, messages: &[Message], params: &DecodingParams) -> Result<(String, Value), GatewayError> {
        let transport = self.transport.as_ref().expect("live transport present outside replay");
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": params.temperature,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
        })
        .to_string();
        let mut attempt = 0;
        loop {
            self.limiter.acquire(self.clock.as_ref());
            let failure = match transport.post_json(&self.config.endpoint, self.config.api_key.as_deref(), &body) {
                Ok(resp) if (200..300).contains(&resp.status) => return parse_completion(&resp.body),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => format!("HTTP {}: {}", resp.status, resp.body),
                Ok(resp) => return Err(GatewayError::Http { status: resp.status, body: resp.body }),
                Err(e) => e,
            };
            if attempt >= self.config.max_retries {
                return Err(GatewayError::RetriesExhausted { attempts: attempt + 1, last: failure });
            }
            log::warn!("chat attempt {} failed: {failure}", attempt + 1);
            self.clock.sleep(self.config.backoff(attempt));
            attempt += 1;
        }
    }
}

/// Replies of one conversation, in turn order, with the cache key of each turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub replies: Vec<String>,
    pub keys: Vec<CacheKey>,
}

fn parse_completion(body: &str) -> Result<(String, Value), GatewayError> {
    let malformed = |m: &str| GatewayError::MalformedResponse { message: m.into(), body: body.into() };
    let v: Value = serde_json::from_str(body).map_err(|e| malformed(&e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("no choices[0].message.content string"))?
        .to_string();
    Ok((text, v))
}

fn provider_metadata(body: &Value) -> std::collections::BTreeMap<String, Value> {
    let mut meta = std::collections::BTreeMap::new();
    for field in ["id", "model", "usage", "system_fingerprint"] {
        if let Some(v) = body.get(field) {
            meta.insert(field.to_string(), v.clone());
        }
    }
    if let Some(reason) = body.pointer("/choices/0/finish_reason") {
        meta.insert("finish_reason".into(), reason.clone());
    }
    meta.insert("max_tokens".into(), Value::String("provider default".into()));
    meta.insert("top_p".into(), Value::String("provider default".into()));
    meta
}

/// A transport answering from a closure; records every request body.
pub struct ScriptedTransport {
    handler: Box<dyn Fn(&Value) -> HttpResponse + Send + Sync>,
    requests: std::sync::Mutex<Vec<Value>>,
}

impl ScriptedTransport {
    pub fn new(handler: impl Fn(&Value) -> HttpResponse + Send + Sync + 'static) -> Self {
        ScriptedTransport { handler: Box::new(handler), requests: std::sync::Mutex::new(Vec::new()) }
    }

    /// A provider-shaped 200 response carrying `content`.
    pub fn completion(content: &str) -> HttpResponse {
        HttpResponse {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]})
                .to_string(),
        }
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }
}

impl Transport for ScriptedTransport {
    fn post_json(&self, _url: &str, _api_key: Option<&str>, body: &str) -> Result<HttpResponse, String> {
        let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
        self.requests.lock().unwrap().push(v.clone());
        Ok((self.handler)(&v))
    }
}
