//! External model capabilities: text generation, embedding, summarization.
//!
//! Every model call in the engine goes through one of the three traits
//! below. [`MockProvider`] is a deterministic stand-in used by tests and
//! offline runs; [`OpenAiClient`] talks to any OpenAI-compatible server.

mod mock;
mod openai;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use mock::{FnGenerator, MockProvider, MOCK_EMBED_DIM};
pub use openai::OpenAiClient;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProviderError {
    #[error("request rejected: {0}")]
    Rejected(String),

    #[error("capability mismatch: endpoint serves {actual}, called as {expected}")]
    Capability { expected: Capability, actual: Capability },

    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("unexpected response: {0}")]
    Decode(String),

    #[error("provider unavailable: {0}")]
    Unavailable(String),

    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<ProviderError> },
}

impl ProviderError {
    /// Whether a retry may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            ProviderError::Transport(_) | ProviderError::Unavailable(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Generate,
    Embed,
    Summarize,
}

impl std::fmt::Display for Capability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Capability::Generate => "generate",
            Capability::Embed => "embed",
            Capability::Summarize => "summarize",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl GenerationRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 256;

    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            max_tokens: Self::DEFAULT_MAX_TOKENS,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::Rejected("empty prompt".into()));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::Rejected("max_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::Rejected("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// Identifies the embedding space; stored in index headers.
    fn embedder_id(&self) -> String;

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

pub trait Summarizer: Send + Sync {
    fn summarize(&self, text: &str) -> Result<String, ProviderError>;
}

pub(crate) fn reject_empty(text: &str, what: &str) -> Result<(), ProviderError> {
    if text.trim().is_empty() {
        Err(ProviderError::Rejected(format!("empty {what} input")))
    } else {
        Ok(())
    }
}

/// Exponential backoff for transient failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay_for(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    let delay = self.delay_for(attempt);
                    tracing::debug!(attempt, ?delay, error = %e, "retrying provider call");
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    attempt += 1;
                }
                Err(e) if e.is_transient() => {
                    return Err(ProviderError::Exhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Applies a [`RetryPolicy`] around any provider.
pub struct Retrying<P> {
    inner: P,
    policy: RetryPolicy,
}

impl<P> Retrying<P> {
    pub fn new(inner: P, policy: RetryPolicy) -> Self {
        Retrying { inner, policy }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Generator> Generator for Retrying<P> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        req.validate()?;
        self.policy.run(|| self.inner.generate(req))
    }
}

impl<P: Embedder> Embedder for Retrying<P> {
    fn embedder_id(&self) -> String {
        self.inner.embedder_id()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        self.policy.run(|| self.inner.embed(text))
    }
}

impl<P: Summarizer> Summarizer for Retrying<P> {
    fn summarize(&self, text: &str) -> Result<String, ProviderError> {
        self.policy.run(|| self.inner.summarize(text))
    }
}

/// The three model roles used by the pipelines.
#[derive(Clone)]
pub struct Providers {
    pub generator: Arc<dyn Generator>,
    pub embedder: Arc<dyn Embedder>,
    pub summarizer: Arc<dyn Summarizer>,
}

impl Providers {
    pub fn mock(seed: u64) -> Self {
        let mock = Arc::new(MockProvider::new(seed));
        Providers {
            generator: mock.clone(),
            embedder: mock.clone(),
            summarizer: mock,
        }
    }
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers")
            .field("embedder", &self.embedder.embedder_id())
            .finish_non_exhaustive()
    }
}
