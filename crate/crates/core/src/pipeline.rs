//! Answer pipelines: the knowledge-graph-guided K²RAG flow and four naive
//! baselines (semantic, keyword, hybrid, knowledge graph). All of them end
//! with the same generation prompt.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chunking::{chunk_document, tokenize, ChunkSet, ChunkingConfig};
use crate::dense::DenseIndex;
use crate::error::{Error, Result};
use crate::graph::{GraphQueryConfig, KnowledgeGraph};
use crate::hybrid::{HybridConfig, HybridHit, HybridRetriever};
use crate::prompts;
use crate::provider::{GenerationRequest, Providers};
use crate::sparse::SparseIndex;

pub use crate::prompts::{generation_prompt as build_generation_prompt, question_prompt as build_question_prompt};

pub mod step {
    pub const RETRIEVE: &str = "RETRIEVE";
    pub const KG_QUERY: &str = "KG_QUERY";
    pub const KG_SUMMARY: &str = "KG_SUMMARY";
    pub const SUBQ_GEN: &str = "SUBQ_GEN";
    pub const HYBRID_RETRIEVE: &str = "HYBRID_RETRIEVE";
    pub const SUBANS_GEN: &str = "SUBANS_GEN";
    pub const SUBANS_SUMMARY: &str = "SUBANS_SUMMARY";
    pub const SUBANS_CONCAT_SUMMARY: &str = "SUBANS_CONCAT_SUMMARY";
    pub const FINAL_GEN: &str = "FINAL_GEN";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Semantic,
    Keyword,
    Hybrid,
    Kg,
    K2rag,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::Semantic,
        PipelineKind::Keyword,
        PipelineKind::Hybrid,
        PipelineKind::Kg,
        PipelineKind::K2rag,
    ];

    /// Retrieval weight for the vector pipelines; `hybrid_lambda` is the
    /// configured hybrid operating point.
    pub fn lambda(self, hybrid_lambda: f64) -> Option<f64> {
        match self {
            PipelineKind::Semantic => Some(1.0),
            PipelineKind::Keyword => Some(0.0),
            PipelineKind::Hybrid | PipelineKind::K2rag => Some(hybrid_lambda),
            PipelineKind::Kg => None,
        }
    }

    /// K²RAG indexes the summarized corpus, the baselines the raw one.
    pub fn uses_summarized_corpus(self) -> bool {
        self == PipelineKind::K2rag
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Semantic => "semantic",
            PipelineKind::Keyword => "keyword",
            PipelineKind::Hybrid => "hybrid",
            PipelineKind::Kg => "kg",
            PipelineKind::K2rag => "k2rag",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown pipeline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub label: String,
    pub input_digest: String,
    pub output_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub duration_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineAnswer {
    pub pipeline: PipelineKind,
    pub question: String,
    pub answer: String,
    pub step_trace: Vec<TraceStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub total_duration_secs: f64,
}

impl PipelineAnswer {
    pub fn labels(&self) -> Vec<&str> {
        self.step_trace.iter().map(|s| s.label.as_str()).collect()
    }

    /// Trace without timings: one line per step with label, digests and
    /// detail, followed by the answer digest. Stable across runs for
    /// deterministic providers.
    pub fn canonical_trace(&self) -> String {
        let mut out = String::new();
        for s in &self.step_trace {
            out.push_str(&format!(
                "{} {} {} {}\n",
                s.label,
                s.input_digest,
                s.output_digest,
                s.detail.as_deref().unwrap_or("-")
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("WARN {w}\n"));
        }
        out.push_str(&format!("ANSWER {}\n", digest(&self.answer)));
        out
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Tracer {
    steps: Vec<TraceStep>,
}

impl Tracer {
    fn run(
        &mut self,
        label: &'static str,
        input: &str,
        f: impl FnOnce() -> Result<(String, Option<String>)>,
    ) -> Result<String> {
        let start = Instant::now();
        let (output, detail) = f().map_err(|e| e.at_step(label))?;
        self.steps.push(TraceStep {
            label: label.to_owned(),
            input_digest: digest(input),
            output_digest: digest(&output),
            detail,
            duration_secs: start.elapsed().as_secs_f64(),
        });
        Ok(output)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub hybrid: HybridConfig,
    pub kg_query: GraphQueryConfig,
    /// Chunking of knowledge-graph output into sub-question topics.
    pub kg_results_chunking: ChunkingConfig,
    pub max_answer_tokens: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            hybrid: HybridConfig::default(),
            kg_query: GraphQueryConfig::default(),
            kg_results_chunking: ChunkingConfig {
                chunk_size: 128,
                overlap: 10,
                tail: true,
            },
            max_answer_tokens: GenerationRequest::DEFAULT_MAX_TOKENS,
        }
    }
}

impl PipelineConfig {
    fn request(&self, prompt: String) -> GenerationRequest {
        GenerationRequest {
            max_tokens: self.max_answer_tokens,
            ..GenerationRequest::new(prompt)
        }
    }
}

/// Chunks plus the sparse and dense stores built over them.
#[derive(Debug, Clone)]
pub struct VectorStores {
    pub chunks: ChunkSet,
    pub sparse: SparseIndex,
    pub dense: DenseIndex,
}

impl VectorStores {
    pub fn retriever(&self) -> Result<HybridRetriever<'_>> {
        HybridRetriever::new(&self.chunks, &self.sparse, &self.dense)
    }
}

fn join_hits(hits: &[HybridHit]) -> String {
    hits.iter()
        .map(|h| h.chunk.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn retrieval_detail(cfg: &HybridConfig, hits: &[HybridHit]) -> String {
    format!("lambda={} k={} hits={}", cfg.lambda, cfg.k, hits.len())
}

/// Semantic, keyword or hybrid baseline: retrieve, then generate.
pub fn answer_naive_vector(
    question: &str,
    kind: PipelineKind,
    stores: &VectorStores,
    providers: &Providers,
    cfg: &PipelineConfig,
) -> Result<PipelineAnswer> {
    let lambda = match kind {
        PipelineKind::Semantic | PipelineKind::Keyword | PipelineKind::Hybrid => {
            kind.lambda(cfg.hybrid.lambda).expect("vector kinds have a lambda")
        }
        other => return Err(Error::InvalidInput(format!("{other} is not a vector pipeline"))),
    };
    let start = Instant::now();
    let retriever = stores.retriever()?;
    let hybrid = cfg.hybrid.with_lambda(lambda);
    let mut trace = Tracer::default();
    let context = trace.run(step::RETRIEVE, question, || {
        let hits = retriever.top_k(question, providers.embedder.as_ref(), &hybrid)?;
        Ok((join_hits(&hits), Some(retrieval_detail(&hybrid, &hits))))
    })?;
    let prompt = prompts::generation_prompt(&context, question);
    let answer = trace.run(step::FINAL_GEN, &prompt, || {
        Ok((providers.generator.generate(&cfg.request(prompt.clone()))?, None))
    })?;
    Ok(PipelineAnswer {
        pipeline: kind,
        question: question.to_owned(),
        answer,
        step_trace: trace.steps,
        warnings: Vec::new(),
        total_duration_secs: start.elapsed().as_secs_f64(),
    })
}

/// Knowledge-graph baseline: the graph answer becomes the context of one
/// final generation.
pub fn answer_naive_kg(
    question: &str,
    kg: &KnowledgeGraph,
    providers: &Providers,
    cfg: &PipelineConfig,
) -> Result<PipelineAnswer> {
    let start = Instant::now();
    let mut trace = Tracer::default();
    let context = trace.run(step::KG_QUERY, question, || {
        let out = kg.query(
            question,
            providers.embedder.as_ref(),
            providers.generator.as_ref(),
            &cfg.kg_query,
        )?;
        Ok((out, None))
    })?;
    let prompt = prompts::generation_prompt(&context, question);
    let answer = trace.run(step::FINAL_GEN, &prompt, || {
        Ok((providers.generator.generate(&cfg.request(prompt.clone()))?, None))
    })?;
    Ok(PipelineAnswer {
        pipeline: PipelineKind::Kg,
        question: question.to_owned(),
        answer,
        step_trace: trace.steps,
        warnings: Vec::new(),
        total_duration_secs: start.elapsed().as_secs_f64(),
    })
}

fn summarize_or_empty(providers: &Providers, text: &str) -> Result<String> {
    if text.trim().is_empty() {
        Ok(String::new())
    } else {
        Ok(providers.summarizer.summarize(text)?)
    }
}

/// K²RAG:
/// (A) query the knowledge graph; (B) summarize its output; (C) split the
/// raw output into topic chunks and turn each into a sub-question;
/// (D) answer each sub-question from hybrid retrieval, summarize every
/// sub-answer, then summarize their concatenation; (E) answer the original
/// question from the graph summary followed by the sub-answer summary.
///
/// A failing sub-question iteration is skipped with a warning; any other
/// failure aborts with the step label.
pub fn answer_k2rag(
    question: &str,
    kg: &KnowledgeGraph,
    stores: &VectorStores,
    providers: &Providers,
    cfg: &PipelineConfig,
) -> Result<PipelineAnswer> {
    let start = Instant::now();
    let retriever = stores.retriever()?;
    let hybrid = cfg.hybrid;
    let mut trace = Tracer::default();
    let mut warnings = Vec::new();

    let kg_output = trace.run(step::KG_QUERY, question, || {
        let out = kg.query(
            question,
            providers.embedder.as_ref(),
            providers.generator.as_ref(),
            &cfg.kg_query,
        )?;
        Ok((out, None))
    })?;
    let kg_summary = trace.run(step::KG_SUMMARY, &kg_output, || {
        Ok((summarize_or_empty(providers, &kg_output)?, None))
    })?;

    let topics = chunk_document("kg-output", &tokenize(&kg_output), &cfg.kg_results_chunking);
    let mut sub_answers = Vec::with_capacity(topics.len());
    for topic in &topics {
        let mut local = Tracer::default();
        let iteration = (|| -> Result<String> {
            let sub_question = local.run(step::SUBQ_GEN, &topic.text, || {
                let q = providers
                    .generator
                    .generate(&cfg.request(prompts::question_prompt(&topic.text)))?;
                Ok((q, None))
            })?;
            let context = local.run(step::HYBRID_RETRIEVE, &sub_question, || {
                let hits = retriever.top_k(&sub_question, providers.embedder.as_ref(), &hybrid)?;
                Ok((join_hits(&hits), Some(retrieval_detail(&hybrid, &hits))))
            })?;
            let prompt = prompts::generation_prompt(&context, &sub_question);
            let sub_answer = local.run(step::SUBANS_GEN, &prompt, || {
                Ok((providers.generator.generate(&cfg.request(prompt.clone()))?, None))
            })?;
            local.run(step::SUBANS_SUMMARY, &sub_answer, || {
                Ok((providers.summarizer.summarize(&sub_answer)?, None))
            })
        })();
        match iteration {
            Ok(summary) => {
                trace.steps.extend(local.steps);
                sub_answers.push(summary);
            }
            Err(e) => {
                tracing::warn!(topic = topic.index, error = %e, "skipping sub-question");
                warnings.push(format!("topic {} skipped: {e}", topic.index));
            }
        }
    }

    let concatenated = sub_answers.join("\n\n");
    let sub_summary = trace.run(step::SUBANS_CONCAT_SUMMARY, &concatenated, || {
        Ok((summarize_or_empty(providers, &concatenated)?, None))
    })?;

    let context = format!("{kg_summary}\n\n{sub_summary}");
    let prompt = prompts::generation_prompt(&context, question);
    let answer = trace.run(step::FINAL_GEN, &prompt, || {
        Ok((providers.generator.generate(&cfg.request(prompt.clone()))?, None))
    })?;
    Ok(PipelineAnswer {
        pipeline: PipelineKind::K2rag,
        question: question.to_owned(),
        answer,
        step_trace: trace.steps,
        warnings,
        total_duration_secs: start.elapsed().as_secs_f64(),
    })
}

/// Anything that turns a question into an answer; evaluated by
/// [`crate::eval::run_evaluation`].
pub trait AnswerPipeline: Send + Sync {
    fn kind(&self) -> PipelineKind;
    fn answer(&self, question: &str) -> Result<PipelineAnswer>;
}

/// A pipeline kind bound to its loaded stores and providers.
pub struct Pipeline {
    kind: PipelineKind,
    providers: Providers,
    cfg: PipelineConfig,
    kg: Option<KnowledgeGraph>,
    vectors: Option<VectorStores>,
}

impl Pipeline {
    pub fn new(
        kind: PipelineKind,
        providers: Providers,
        cfg: PipelineConfig,
        kg: Option<KnowledgeGraph>,
        vectors: Option<VectorStores>,
    ) -> Result<Self> {
        let needs_kg = matches!(kind, PipelineKind::Kg | PipelineKind::K2rag);
        let needs_vectors = kind != PipelineKind::Kg;
        if needs_kg && kg.is_none() {
            return Err(Error::InvalidInput(format!("{kind} pipeline needs a knowledge graph")));
        }
        if needs_vectors && vectors.is_none() {
            return Err(Error::InvalidInput(format!(
                "{kind} pipeline needs sparse and dense stores"
            )));
        }
        if let Some(v) = &vectors {
            v.retriever()?;
        }
        Ok(Pipeline {
            kind,
            providers,
            cfg,
            kg,
            vectors,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }
}

impl AnswerPipeline for Pipeline {
    fn kind(&self) -> PipelineKind {
        self.kind
    }

    fn answer(&self, question: &str) -> Result<PipelineAnswer> {
        let kg = || self.kg.as_ref().expect("checked in Pipeline::new");
        let vectors = || self.vectors.as_ref().expect("checked in Pipeline::new");
        match self.kind {
            PipelineKind::Kg => answer_naive_kg(question, kg(), &self.providers, &self.cfg),
            PipelineKind::K2rag => answer_k2rag(question, kg(), vectors(), &self.providers, &self.cfg),
            kind => answer_naive_vector(question, kind, vectors(), &self.providers, &self.cfg),
        }
    }
}
