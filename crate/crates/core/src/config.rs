//! Engine configuration file (TOML). Every field is optional; omitted
//! fields take the defaults below, unknown keys are rejected.
//!
//! ```toml
//! [providers.generate]
//! kind = "openai"
//! base_url = "http://localhost:8000/v1"
//! model = "mistral-7b-instruct-q4"
//!
//! [hybrid]
//! lambda = 0.8
//! k = 10
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chunking::ChunkingConfig;
use crate::corpus::{CorpusFormat, FieldMapping};
use crate::error::{Error, Result};
use crate::graph::GraphQueryConfig;
use crate::hybrid::HybridConfig;
use crate::pipeline::PipelineConfig;
use crate::provider::{Capability, Embedder, MockProvider, OpenAiClient, Providers, RetryPolicy};

/// Environment variable consulted for the API token when a provider does
/// not name its own.
pub const DEFAULT_TOKEN_ENV: &str = "K2RAG_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: Option<String>,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: Option<String>,
    /// Mock only.
    pub seed: u64,
    /// Mock only: tokens of context echoed as an answer.
    pub answer_tokens: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            base_url: None,
            model: String::new(),
            timeout_secs: 120.0,
            max_retries: 2,
            auth_token_env: None,
            seed: 0,
            answer_tokens: 160,
        }
    }
}

impl ProviderConfig {
    fn violations(&self, role: &str) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.timeout_secs > 0.0) {
            errors.push(format!("providers.{role}: timeout_secs must be positive"));
        }
        if self.kind == ProviderKind::Openai {
            if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                errors.push(format!("providers.{role}: base_url is required for openai providers"));
            }
            if self.model.trim().is_empty() {
                errors.push(format!("providers.{role}: model is required for openai providers"));
            }
        }
        errors
    }

    fn mock(&self) -> MockProvider {
        MockProvider::new(self.seed).with_answer_tokens(self.answer_tokens)
    }

    fn openai(&self, capability: Capability) -> Result<OpenAiClient> {
        let env = self.auth_token_env.as_deref().unwrap_or(DEFAULT_TOKEN_ENV);
        let token = std::env::var(env).ok().filter(|t| !t.is_empty());
        let retry = RetryPolicy {
            max_retries: self.max_retries,
            ..RetryPolicy::default()
        };
        Ok(OpenAiClient::new(
            self.base_url.as_deref().unwrap_or_default(),
            &self.model,
            capability,
            Duration::from_secs_f64(self.timeout_secs),
            retry,
            token,
        )?)
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        Ok(match self.kind {
            ProviderKind::Mock => Arc::new(self.mock()),
            ProviderKind::Openai => Arc::new(self.openai(Capability::Embed)?),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProvidersConfig {
    pub generate: ProviderConfig,
    pub embed: ProviderConfig,
    pub summarize: ProviderConfig,
    /// Embedder used to score answers; defaults to `embed`.
    pub score_embed: Option<ProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkingProfiles {
    /// Sparse and dense stores.
    pub vector: ChunkingConfig,
    /// Knowledge-graph construction.
    pub kg: ChunkingConfig,
    /// Knowledge-graph output split into sub-question topics.
    pub kg_results: ChunkingConfig,
}

impl Default for ChunkingProfiles {
    fn default() -> Self {
        let profile = |chunk_size, overlap| ChunkingConfig {
            chunk_size,
            overlap,
            tail: true,
        };
        ChunkingProfiles {
            vector: profile(256, 20),
            kg: profile(300, 100),
            kg_results: profile(128, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            seed: 42,
            checkpoint_every: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub format: Option<CorpusFormat>,
    pub fields: FieldMapping,
    pub skip_malformed: bool,
    pub parallel: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            format: None,
            fields: FieldMapping::default(),
            skip_malformed: false,
            parallel: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub summarized: Option<PathBuf>,
    pub index_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: None,
            summarized: None,
            index_dir: PathBuf::from("indexes"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub providers: ProvidersConfig,
    pub chunking: ChunkingProfiles,
    pub hybrid: HybridConfig,
    pub kg_query: GraphQueryConfig,
    pub eval: EvalConfig,
    pub corpus: CorpusConfig,
    pub paths: PathsConfig,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_owned()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        errors.extend(self.providers.generate.violations("generate"));
        errors.extend(self.providers.embed.violations("embed"));
        errors.extend(self.providers.summarize.violations("summarize"));
        if let Some(p) = &self.providers.score_embed {
            errors.extend(p.violations("score_embed"));
        }
        errors.extend(self.chunking.vector.violations("chunking.vector"));
        errors.extend(self.chunking.kg.violations("chunking.kg"));
        errors.extend(self.chunking.kg_results.violations("chunking.kg_results"));
        errors.extend(self.hybrid.violations());
        errors.extend(self.kg_query.violations());
        if self.eval.folds == 0 {
            errors.push("eval: folds must be at least 1".into());
        }
        if self.corpus.parallel == 0 {
            errors.push("corpus: parallel must be at least 1".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            hybrid: self.hybrid,
            kg_query: self.kg_query,
            kg_results_chunking: self.chunking.kg_results,
            ..PipelineConfig::default()
        }
    }

    pub fn providers(&self) -> Result<Providers> {
        let p = &self.providers;
        let all_mock = [&p.generate, &p.embed, &p.summarize]
            .iter()
            .all(|c| c.kind == ProviderKind::Mock);
        if all_mock && p.generate == p.embed && p.embed == p.summarize {
            let mock = Arc::new(p.generate.mock());
            return Ok(Providers {
                generator: mock.clone(),
                embedder: mock.clone(),
                summarizer: mock,
            });
        }
        Ok(Providers {
            generator: match p.generate.kind {
                ProviderKind::Mock => Arc::new(p.generate.mock()),
                ProviderKind::Openai => Arc::new(p.generate.openai(Capability::Generate)?),
            },
            embedder: p.embed.embedder()?,
            summarizer: match p.summarize.kind {
                ProviderKind::Mock => Arc::new(p.summarize.mock()),
                ProviderKind::Openai => Arc::new(p.summarize.openai(Capability::Summarize)?),
            },
        })
    }

    pub fn scoring_embedder(&self) -> Result<Arc<dyn Embedder>> {
        self.providers
            .score_embed
            .as_ref()
            .unwrap_or(&self.providers.embed)
            .embedder()
    }

    /// The effective configuration as json, for provenance in reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_yields_defaults() {
        let cfg = EngineConfig::from_toml("").unwrap();
        assert_eq!(cfg.hybrid.lambda, 0.8);
        assert_eq!(cfg.hybrid.k, 10);
        assert_eq!((cfg.chunking.vector.chunk_size, cfg.chunking.vector.overlap), (256, 20));
        assert_eq!((cfg.chunking.kg.chunk_size, cfg.chunking.kg.overlap), (300, 100));
        assert_eq!(
            (cfg.chunking.kg_results.chunk_size, cfg.chunking.kg_results.overlap),
            (128, 10)
        );
        assert_eq!(cfg.eval.folds, 10);
        assert_eq!(cfg.kg_query, GraphQueryConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            EngineConfig::from_toml("[hybrid]\nlamda = 0.5\n"),
            Err(Error::Config(_))
        ));
        assert!(EngineConfig::from_toml("surprise = 1\n").is_err());
    }

    #[test]
    fn all_violations_listed() {
        let text = "[hybrid]\nlambda = 1.5\n[chunking.vector]\nchunk_size = 10\noverlap = 10\n[eval]\nfolds = 0\n[providers.generate]\nkind = \"openai\"\n";
        match EngineConfig::from_toml(text).unwrap_err() {
            Error::Config(errors) => {
                assert_eq!(errors.len(), 5, "{errors:?}");
                assert!(errors.iter().any(|e| e.contains("lambda")));
                assert!(errors.iter().any(|e| e.contains("chunking.vector")));
                assert!(errors.iter().any(|e| e.contains("folds")));
                assert!(errors.iter().any(|e| e.contains("base_url")));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn echo_round_trips() {
        let cfg = EngineConfig::from_toml("[hybrid]\nk = 5\n").unwrap();
        let back: EngineConfig = serde_json::from_value(cfg.echo()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shared_mock_providers() {
        let cfg = EngineConfig::default();
        let p = cfg.providers().unwrap();
        assert_eq!(p.embedder.embedder_id(), "mock-hash-64-seed0");
        assert_eq!(cfg.scoring_embedder().unwrap().embedder_id(), "mock-hash-64-seed0");
    }
}
