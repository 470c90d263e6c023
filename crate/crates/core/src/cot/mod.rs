//! Target-description generation through an OpenAI-compatible multimodal
//! chat endpoint, using a selective chain-of-thought prompt.
//!
//! The prompt first narrows the reference image down to the content the
//! modification text touches, then applies the edit and asks for one target
//! description. Answers are strict staged JSON and are cached by prompt hash.

mod cache;
mod gate;
mod prompt;
mod response;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use cache::{parse_cache, CacheEntry, CacheError, DescriptionCache};
pub use gate::{Gate, Permit};
pub use prompt::{build_prompt, prompt_hash, DESCRIPTION_KEY, STAGE_KEYS, TEMPLATE_VERSION};
pub use response::{assistant_text, parse_staged_answer, StagedAnswer};

pub const API_KEY_ENV: &str = "SDR_API_KEY";
pub const BASE_URL_ENV: &str = "SDR_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Error)]
pub enum CotError {
    #[error("modification text is empty")]
    EmptyModificationText,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("http error{}: {message}", status.map(|s| format!(" {s}")).unwrap_or_default())]
    HttpError { status: Option<u16>, message: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("{API_KEY_ENV} is not set")]
    MissingApiKey,
    #[error("reference image for {id:?}: {source}")]
    Image {
        id: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// A reference image ready to be sent inline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceImage {
    pub bytes: Vec<u8>,
    pub media_type: String,
}

impl ReferenceImage {
    pub fn new(bytes: Vec<u8>, media_type: impl Into<String>) -> Self {
        Self {
            bytes,
            media_type: media_type.into(),
        }
    }

    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

const IMAGE_EXTENSIONS: [(&str, &str); 5] = [
    ("jpg", "image/jpeg"),
    ("jpeg", "image/jpeg"),
    ("png", "image/png"),
    ("webp", "image/webp"),
    ("gif", "image/gif"),
];

/// Resolves reference ids to image files in one directory (`<id>.<ext>`).
#[derive(Debug, Clone)]
pub struct ImageDir {
    root: PathBuf,
}

impl ImageDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn load(&self, id: &str) -> Result<ReferenceImage, CotError> {
        for (ext, media) in IMAGE_EXTENSIONS {
            let path = self.root.join(format!("{id}.{ext}"));
            match std::fs::read(&path) {
                Ok(bytes) => return Ok(ReferenceImage::new(bytes, media)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
                Err(source) => {
                    return Err(CotError::Image {
                        id: id.to_string(),
                        source,
                    })
                }
            }
        }
        Err(CotError::Image {
            id: id.to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no image file with a known extension"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CotRequest {
    pub reference_image: ReferenceImage,
    pub modification_text: String,
    pub model: String,
    temperature: f64,
    pub max_tokens: u32,
}

impl CotRequest {
    pub fn new(
        reference_image: ReferenceImage,
        modification_text: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        Self {
            reference_image,
            modification_text: modification_text.into(),
            model: model.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens.max(1);
        self
    }

    /// Always 0.0; generation is run greedily.
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.reference_image.bytes, &self.modification_text, &self.model)
    }

    /// The chat-completions request body.
    pub fn body(&self) -> Result<serde_json::Value, CotError> {
        let prompt = build_prompt(&self.modification_text)?;
        Ok(json!({
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": self.reference_image.data_url()}},
                ],
            }],
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDescription {
    pub query_id: String,
    pub description: String,
    pub stages: BTreeMap<String, String>,
    pub model: String,
    pub prompt_hash: String,
    pub latency_ms: u64,
    /// HTTP requests issued to obtain this description (0 on a cache hit).
    pub call_count: u32,
}

impl TargetDescription {
    pub fn from_cache(entry: CacheEntry) -> Self {
        Self {
            query_id: entry.query_id,
            description: entry.description,
            stages: entry.stages,
            model: entry.model,
            prompt_hash: entry.prompt_hash,
            latency_ms: entry.latency_ms,
            call_count: 0,
        }
    }

    pub fn is_cache_hit(&self) -> bool {
        self.call_count == 0
    }
}

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: Option<String>,
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
        }
    }

    /// Reads `SDR_BASE_URL` (default OpenAI) and `SDR_API_KEY`.
    pub fn from_env() -> Self {
        let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(base, key)
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

/// Retry schedule for 429 and 5xx responses and transport failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` is 1-based.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay
            .mul_f64(self.factor.powi(attempt.saturating_sub(1) as i32))
    }
}

enum Attempt {
    Done(String),
    Retry(CotError),
    Fatal(CotError),
}

/// Shareable client: bounded concurrency, retries, write-through cache.
pub struct CotClient {
    endpoint: Endpoint,
    agent: ureq::Agent,
    retry: RetryPolicy,
    gate: Gate,
    cache: Arc<DescriptionCache>,
    http_calls: AtomicU64,
}

impl CotClient {
    pub fn new(endpoint: Endpoint, cache: Arc<DescriptionCache>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint,
            agent,
            retry: RetryPolicy::default(),
            gate: Gate::new(DEFAULT_CONCURRENCY),
            cache,
            http_calls: AtomicU64::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.gate = Gate::new(limit);
        self
    }

    pub fn cache(&self) -> &DescriptionCache {
        &self.cache
    }

    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    /// Total HTTP requests issued by this client.
    pub fn http_calls(&self) -> u64 {
        self.http_calls.load(Ordering::Relaxed)
    }

    /// Returns the cached description for `req`, or generates and caches one.
    pub fn generate(&self, query_id: &str, req: &CotRequest) -> Result<TargetDescription, CotError> {
        let hash = req.prompt_hash();
        if let Some(hit) = self.cache.get(&hash) {
            let mut d = TargetDescription::from_cache(hit);
            d.query_id = query_id.to_string();
            return Ok(d);
        }

        let body = req.body()?;
        let key = self.endpoint.api_key.as_deref().ok_or(CotError::MissingApiKey)?;

        let started = Instant::now();
        let (text, calls) = {
            let _permit = self.gate.acquire();
            self.post_with_retry(key, &body)?
        };
        let latency_ms = started.elapsed().as_millis() as u64;

        let answer = parse_staged_answer(&assistant_text(&text)?)?;
        let entry = CacheEntry {
            query_id: query_id.to_string(),
            model: req.model.clone(),
            prompt_hash: hash,
            description: answer.description,
            stages: answer.stages,
            latency_ms,
        };
        self.cache.append(entry.clone())?;
        Ok(TargetDescription {
            call_count: calls,
            ..TargetDescription::from_cache(entry)
        })
    }

    fn post_with_retry(&self, key: &str, body: &serde_json::Value) -> Result<(String, u32), CotError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(key, body) {
                Attempt::Done(text) => return Ok((text, attempt)),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.retry.max_attempts => {
                    return Err(match e {
                        CotError::HttpError { status: Some(429), .. } => CotError::RateLimited { attempts: attempt },
                        other => other,
                    })
                }
                Attempt::Retry(e) => {
                    let wait = self.retry.delay_after(attempt);
                    log::warn!("attempt {attempt} failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                }
            }
        }
    }

    fn post_once(&self, key: &str, body: &serde_json::Value) -> Attempt {
        self.http_calls.fetch_add(1, Ordering::Relaxed);
        let resp = self
            .agent
            .post(&self.endpoint.completions_url())
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(CotError::HttpError {
                    status: None,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry(CotError::HttpError {
                    status: Some(status),
                    message: e.to_string(),
                })
            }
        };
        match status {
            200..=299 => Attempt::Done(text),
            429 | 500..=599 => Attempt::Retry(CotError::HttpError {
                status: Some(status),
                message: truncate(&text),
            }),
            _ => Attempt::Fatal(CotError::HttpError {
                status: Some(status),
                message: truncate(&text),
            }),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let delays: Vec<u64> = (1..5).map(|a| p.delay_after(a).as_secs()).collect();
        assert_eq!(delays, [1, 2, 4, 8]);
        assert_eq!(p.max_attempts, 5);
    }

    #[test]
    fn request_body_shape() {
        let req = CotRequest::new(ReferenceImage::new(vec![1, 2, 3], "image/png"), "is red", "gpt-4.1");
        assert_eq!(req.temperature(), 0.0);
        let body = req.body().unwrap();
        assert_eq!(body["model"], "gpt-4.1");
        assert_eq!(body["temperature"], 0.0);
        let content = &body["messages"][0]["content"];
        assert_eq!(content[0]["type"], "text");
        assert_eq!(content[1]["image_url"]["url"], "data:image/png;base64,AQID");
    }

    #[test]
    fn image_dir_resolves_extensions() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ref1.png"), b"png").unwrap();
        let images = ImageDir::new(dir.path());
        let img = images.load("ref1").unwrap();
        assert_eq!(img.media_type, "image/png");
        assert!(matches!(images.load("nope"), Err(CotError::Image { .. })));
    }

    #[test]
    fn missing_key_only_matters_on_a_miss() {
        let cache = Arc::new(DescriptionCache::in_memory());
        let req = CotRequest::new(ReferenceImage::new(vec![9], "image/jpeg"), "is blue", "m");
        let client = CotClient::new(Endpoint::new("http://127.0.0.1:9", None), cache.clone());
        assert!(matches!(client.generate("q", &req), Err(CotError::MissingApiKey)));
        cache
            .append(CacheEntry {
                query_id: "q".into(),
                model: "m".into(),
                prompt_hash: req.prompt_hash(),
                description: "a blue shirt".into(),
                stages: BTreeMap::new(),
                latency_ms: 10,
            })
            .unwrap();
        let d = client.generate("q", &req).unwrap();
        assert_eq!(d.description, "a blue shirt");
        assert_eq!(d.call_count, 0);
        assert_eq!(client.http_calls(), 0);
    }
}
