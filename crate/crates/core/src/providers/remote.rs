//! HTTP clients for completions-style and embeddings-style inference endpoints.
//!
//! Secrets never appear in configuration: `auth_token_env` names the
//! environment variable holding the bearer token.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::synthetic::UnigramFiller;
use super::{
    EmbeddingProvider, FillOutcome, GenerationRequest, LogprobProvider, MaskFiller,
    ProviderIdentity, RankSupport, TextGenerator, TokenScore,
};
use crate::error::{Error, Result};
use crate::transforms::MaskedTemplate;

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_top_k() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    #[serde(default)]
    pub auth_token_env: Option<String>,
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    /// Alternatives requested per position; bounds rank resolution.
    #[serde(default = "default_top_k")]
    pub top_k_logprobs: u32,
    /// Texts longer than this are scored in consecutive non-overlapping chunks.
    #[serde(default)]
    pub chunk_chars: Option<usize>,
    #[serde(default)]
    pub max_fill_tokens: Option<usize>,
}

impl ProviderConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ProviderConfig {
            endpoint_url: endpoint_url.into(),
            auth_token_env: None,
            model_name: model_name.into(),
            request_timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff_ms(),
            top_k_logprobs: default_top_k(),
            chunk_chars: None,
            max_fill_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.request_timeout_ms == 0 {
            return Err(Error::Config {
                field: "request_timeout_ms".into(),
                message: "timeout must be positive".into(),
            });
        }
        if self.endpoint_url.is_empty() {
            return Err(Error::Config {
                field: "endpoint_url".into(),
                message: "endpoint must be set".into(),
            });
        }
        Ok(())
    }
}

/// Whether a failed request may be retried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusClass {
    Success,
    Retryable,
    Fatal,
}

pub fn classify_status(status: u16) -> StatusClass {
    match status {
        200..=299 => StatusClass::Success,
        408 | 425 | 429 | 500..=599 => StatusClass::Retryable,
        _ => StatusClass::Fatal,
    }
}

/// Shared transport: retries with exponential backoff and counts every attempt.
#[derive(Debug)]
pub struct RemoteClient {
    config: ProviderConfig,
    http: reqwest::blocking::Client,
    calls: AtomicU64,
}

impl RemoteClient {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| Error::InvalidProvider(format!("cannot build http client: {e}")))?;
        Ok(RemoteClient {
            config,
            http,
            calls: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn identity(&self, kind: &str) -> ProviderIdentity {
        ProviderIdentity {
            kind: kind.into(),
            model_name: self.config.model_name.clone(),
            endpoint: self.config.endpoint_url.clone(),
        }
    }

    fn token(&self) -> Result<Option<String>> {
        match &self.config.auth_token_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| Error::Config {
                field: "auth_token_env".into(),
                message: format!("environment variable `{var}` is not set"),
            }),
        }
    }

    /// POST `body`, retrying transport errors and retryable statuses up to `max_retries` times.
    pub fn post_json(&self, request_id: &str, body: &Value) -> Result<Value> {
        let token = self.token()?;
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let wait = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            self.calls.fetch_add(1, Ordering::Relaxed);
            let mut req = self.http.post(&self.config.endpoint_url).json(body);
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            match req.send() {
                Err(e) => {
                    last_error = format!("transport: {e}");
                    log::debug!("{request_id}: attempt {attempt} failed: {last_error}");
                }
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    match classify_status(status) {
                        StatusClass::Success => {
                            return resp.json::<Value>().map_err(|e| Error::Provider {
                                id: request_id.into(),
                                message: format!("malformed response body: {e}"),
                            })
                        }
                        StatusClass::Retryable => {
                            last_error = format!("http status {status}");
                            log::debug!("{request_id}: attempt {attempt} got {status}");
                        }
                        StatusClass::Fatal => {
                            let text = resp.text().unwrap_or_default();
                            return Err(Error::Provider {
                                id: request_id.into(),
                                message: format!("http status {status}: {text}"),
                            });
                        }
                    }
                }
            }
        }
        Err(Error::Provider {
            id: request_id.into(),
            message: format!(
                "gave up after {} attempts: {last_error}",
                self.config.max_retries + 1
            ),
        })
    }
}

fn bad_shape(id: &str, what: &str) -> Error {
    Error::Provider {
        id: id.into(),
        message: format!("unexpected response shape: {what}"),
    }
}

/// Parse `choices[0].logprobs` of an echoed completion into token scores.
///
/// Positions with a null log-probability (the first token has no context) are
/// dropped. Ranks come from the top-K alternatives; a token outside them gets
/// rank K + 1 flagged as truncated. Without alternatives ranks are unknown.
pub fn parse_completion_logprobs(body: &Value, top_k: u32) -> Result<Vec<TokenScore>> {
    let lp = body
        .pointer("/choices/0/logprobs")
        .ok_or_else(|| bad_shape("logprobs", "missing choices[0].logprobs"))?;
    let tokens = lp
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| bad_shape("logprobs", "missing tokens"))?;
    let logprobs = lp
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| bad_shape("logprobs", "missing token_logprobs"))?;
    let tops = lp.get("top_logprobs").and_then(Value::as_array);
    if logprobs.len() != tokens.len() {
        return Err(bad_shape("logprobs", "tokens and token_logprobs differ in length"));
    }
    let mut out = Vec::with_capacity(tokens.len());
    for (i, (tok, lp)) in tokens.iter().zip(logprobs).enumerate() {
        let Some(logprob) = lp.as_f64() else { continue };
        let token_text = tok.as_str().unwrap_or_default().to_string();
        let alternatives: Option<HashMap<String, f64>> = tops
            .and_then(|t| t.get(i))
            .and_then(Value::as_object)
            .map(|m| m.iter().filter_map(|(k, v)| v.as_f64().map(|v| (k.clone(), v))).collect());
        let (rank, rank_truncated) = match alternatives {
            None => (None, false),
            Some(alts) => match alts.get(&token_text) {
                Some(&own) => (Some(1 + alts.values().filter(|&&v| v > own).count() as u32), false),
                None => (Some(top_k + 1), true),
            },
        };
        out.push(TokenScore {
            token_text,
            logprob,
            rank,
            rank_truncated,
        });
    }
    Ok(out)
}

fn chunk_text(text: &str, max_chars: usize) -> Vec<&str> {
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut count = 0;
    let mut last_break = None;
    for (i, c) in text.char_indices() {
        if count >= max_chars {
            let cut = last_break.filter(|&b| b > start).unwrap_or(i);
            chunks.push(&text[start..cut]);
            start = cut;
            count = text[start..i].chars().count();
            last_break = None;
        }
        if c.is_whitespace() {
            last_break = Some(i);
        }
        count += 1;
    }
    if start < text.len() {
        chunks.push(&text[start..]);
    }
    chunks
}

/// Completions endpoint with `echo` and `logprobs` support.
#[derive(Debug)]
pub struct RemoteLogprobs {
    client: RemoteClient,
}

impl RemoteLogprobs {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(RemoteLogprobs {
            client: RemoteClient::new(config)?,
        })
    }
}

impl LogprobProvider for RemoteLogprobs {
    fn identity(&self) -> ProviderIdentity {
        self.client.identity("remote-logprobs")
    }

    fn rank_support(&self) -> RankSupport {
        RankSupport::Truncated
    }

    fn token_logprobs(&self, text: &str) -> Result<Vec<TokenScore>> {
        if text.is_empty() {
            return Err(Error::InvalidInput("cannot score empty text".into()));
        }
        let cfg = self.client.config();
        let chunks = match cfg.chunk_chars {
            Some(n) if n > 0 => chunk_text(text, n),
            _ => vec![text],
        };
        let mut out = Vec::new();
        for chunk in chunks {
            let body = json!({
                "model": cfg.model_name,
                "prompt": chunk,
                "max_tokens": 0,
                "echo": true,
                "logprobs": cfg.top_k_logprobs,
                "temperature": 0,
            });
            let resp = self.client.post_json("logprobs", &body)?;
            out.extend(parse_completion_logprobs(&resp, cfg.top_k_logprobs)?);
        }
        Ok(out)
    }

    fn remote_calls(&self) -> u64 {
        self.client.calls()
    }
}

pub fn parse_embedding(body: &Value) -> Result<Vec<f64>> {
    body.pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| bad_shape("embedding", "missing data[0].embedding"))?
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| bad_shape("embedding", "non-numeric entry")))
        .collect()
}

/// Embeddings endpoint. The first response fixes the dimension for the run.
#[derive(Debug)]
pub struct RemoteEmbedding {
    client: RemoteClient,
    dim: OnceLock<usize>,
}

impl RemoteEmbedding {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(RemoteEmbedding {
            client: RemoteClient::new(config)?,
            dim: OnceLock::new(),
        })
    }
}

impl EmbeddingProvider for RemoteEmbedding {
    fn identity(&self) -> ProviderIdentity {
        self.client.identity("remote-embedding")
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let body = json!({ "model": self.client.config().model_name, "input": [text] });
        let v = parse_embedding(&self.client.post_json("embedding", &body)?)?;
        let dim = *self.dim.get_or_init(|| v.len());
        if v.len() != dim {
            return Err(Error::InvalidProvider(format!(
                "embedding dimension drifted from {dim} to {}",
                v.len()
            )));
        }
        Ok(v)
    }

    fn remote_calls(&self) -> u64 {
        self.client.calls()
    }
}

fn completion_text(body: &Value) -> Result<String> {
    body.pointer("/choices/0/text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| bad_shape("completion", "missing choices[0].text"))
}

/// Split a fill-in-the-blank response (`<extra_id_0> a b <extra_id_1> c`) into
/// per-span fills. Returns `None` when any span comes back empty.
pub fn parse_span_fills(response: &str, template: &MaskedTemplate) -> Option<Vec<Vec<String>>> {
    let mut fills = Vec::with_capacity(template.placeholders.len());
    for (i, ph) in template.placeholders.iter().enumerate() {
        let start = response.find(ph.as_str())? + ph.len();
        let end = template
            .placeholders
            .get(i + 1)
            .and_then(|next| response[start..].find(next.as_str()).map(|e| start + e))
            .or_else(|| response[start..].find("<extra_id_").map(|e| start + e))
            .unwrap_or(response.len());
        let words: Vec<String> = response[start..end].split_whitespace().map(str::to_string).collect();
        if words.is_empty() {
            return None;
        }
        fills.push(words);
    }
    Some(fills)
}

/// Fill-in-the-blank generation endpoint; falls back to a unigram filler when
/// the model keeps echoing sentinels.
#[derive(Debug)]
pub struct RemoteFiller {
    client: RemoteClient,
    fallback: Arc<UnigramFiller>,
}

impl RemoteFiller {
    pub fn new(config: ProviderConfig, fallback: Arc<UnigramFiller>) -> Result<Self> {
        Ok(RemoteFiller {
            client: RemoteClient::new(config)?,
            fallback,
        })
    }
}

impl MaskFiller for RemoteFiller {
    fn identity(&self) -> ProviderIdentity {
        self.client.identity("remote-fill")
    }

    fn fill_masks(&self, template: &MaskedTemplate, seed: u64) -> Result<FillOutcome> {
        if template.positions.is_empty() {
            return Err(Error::InvalidInput("template has no masks".into()));
        }
        let cfg = self.client.config();
        let body = json!({
            "model": cfg.model_name,
            "prompt": template.sentinel_text(),
            "max_tokens": cfg.max_fill_tokens.unwrap_or(8 * template.mask_count() + 8),
            "temperature": 1.0,
            "seed": seed,
        });
        let sentinel = template.sentinel_text();
        for _ in 0..2 {
            let text = completion_text(&self.client.post_json("fill", &body)?)?;
            if text.trim() == sentinel.trim() {
                continue;
            }
            if let Some(fills) = parse_span_fills(&text, template) {
                return Ok(FillOutcome {
                    text: template.apply(&fills)?,
                    degraded: false,
                });
            }
        }
        log::warn!("remote filler echoed sentinels twice; using unigram fallback");
        let mut out = self.fallback.fill_masks(template, seed)?;
        out.degraded = true;
        Ok(out)
    }

    fn remote_calls(&self) -> u64 {
        self.client.calls()
    }
}

#[derive(Debug)]
pub struct RemoteGenerator {
    client: RemoteClient,
}

impl RemoteGenerator {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(RemoteGenerator {
            client: RemoteClient::new(config)?,
        })
    }
}

impl TextGenerator for RemoteGenerator {
    fn identity(&self) -> ProviderIdentity {
        self.client.identity("remote-generation")
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        if request.prompt.is_empty() {
            return Err(Error::InvalidInput("prompt must be non-empty".into()));
        }
        let mut body = json!({
            "model": self.client.config().model_name,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens,
        });
        if let Some(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(s) = request.seed_hint {
            body["seed"] = json!(s);
        }
        completion_text(&self.client.post_json("generation", &body)?)
    }

    fn remote_calls(&self) -> u64 {
        self.client.calls()
    }
}
