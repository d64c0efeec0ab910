use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::prompts;

use super::{reject_empty, Capability, Embedder, GenerationRequest, Generator, ProviderError, RetryPolicy, Summarizer};

/// Blocking client for an OpenAI-compatible inference server.
///
/// `base_url` is the API root, e.g. `http://localhost:8000/v1`; requests go
/// to `{base_url}/completions` and `{base_url}/embeddings`.
#[derive(Debug, Clone)]
pub struct OpenAiClient {
    http: reqwest::blocking::Client,
    base_url: String,
    model: String,
    capability: Capability,
    auth_token: Option<String>,
    retry: RetryPolicy,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    message: Option<ChatMessage>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

impl OpenAiClient {
    pub fn new(
        base_url: &str,
        model: &str,
        capability: Capability,
        timeout: Duration,
        retry: RetryPolicy,
        auth_token: Option<String>,
    ) -> Result<Self, ProviderError> {
        if timeout.is_zero() {
            return Err(ProviderError::Rejected("timeout must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(OpenAiClient {
            http,
            base_url: base_url.trim_end_matches('/').to_owned(),
            model: model.to_owned(),
            capability,
            auth_token,
            retry,
            max_tokens: GenerationRequest::DEFAULT_MAX_TOKENS,
        })
    }

    /// Token limit used for summarization requests.
    pub fn with_summary_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    fn check(&self, expected: Capability) -> Result<(), ProviderError> {
        if self.capability == expected {
            Ok(())
        } else {
            Err(ProviderError::Capability {
                expected,
                actual: self.capability,
            })
        }
    }

    fn post<T: serde::de::DeserializeOwned>(
        &self,
        endpoint: &str,
        body: &serde_json::Value,
    ) -> Result<T, ProviderError> {
        let url = format!("{}/{endpoint}", self.base_url);
        self.retry.run(|| {
            let mut req = self.http.post(&url).json(body);
            if let Some(token) = &self.auth_token {
                req = req.bearer_auth(token);
            }
            let resp = req
                .send()
                .map_err(|e| ProviderError::Transport(format!("{url}: {e}")))?;
            let status = resp.status();
            let text = resp
                .text()
                .map_err(|e| ProviderError::Transport(format!("{url}: {e}")))?;
            if !status.is_success() {
                return Err(ProviderError::Http {
                    status: status.as_u16(),
                    body: text.chars().take(512).collect(),
                });
            }
            serde_json::from_str(&text).map_err(|e| ProviderError::Decode(format!("{url}: {e}")))
        })
    }

    fn complete(&self, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": temperature,
        });
        let resp: CompletionResponse = self.post("completions", &body)?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Decode("no choices in completion".into()))?;
        let text = choice
            .text
            .or_else(|| choice.message.and_then(|m| m.content))
            .unwrap_or_default();
        let text = text.trim();
        if text.is_empty() {
            return Err(ProviderError::Decode("empty completion".into()));
        }
        Ok(text.to_owned())
    }
}

impl Generator for OpenAiClient {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        self.check(Capability::Generate)?;
        req.validate()?;
        self.complete(&req.prompt, req.max_tokens, req.temperature)
    }
}

impl Summarizer for OpenAiClient {
    fn summarize(&self, text: &str) -> Result<String, ProviderError> {
        self.check(Capability::Summarize)?;
        reject_empty(text, "summarization")?;
        self.complete(&prompts::summary_prompt(text), self.max_tokens, 0.0)
    }
}

impl Embedder for OpenAiClient {
    fn embedder_id(&self) -> String {
        format!("openai:{}", self.model)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        self.check(Capability::Embed)?;
        reject_empty(text, "embedding")?;
        let body = json!({ "model": self.model, "input": text });
        let resp: EmbeddingResponse = self.post("embeddings", &body)?;
        let v = resp
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| ProviderError::Decode("no embedding in response".into()))?;
        if v.is_empty() {
            return Err(ProviderError::Decode("zero-length embedding".into()));
        }
        Ok(v)
    }
}
