//! Question answering over a document corpus with knowledge-graph-guided
//! hybrid retrieval (K²RAG), four naive retrieval baselines, and a K-fold
//! evaluation harness.
//!
//! Indexing chunks documents into fixed token windows and builds three
//! stores: an Okapi BM25 index, an exact cosine vector index and an
//! entity-relation graph. All model calls (generation, embedding,
//! summarization) go through [`provider`], which ships a deterministic mock
//! alongside an OpenAI-compatible HTTP client.

pub mod chunking;
pub mod config;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hybrid;
mod persist;
pub mod pipeline;
pub mod prompts;
pub mod provider;
pub mod ranking;
pub mod sparse;
pub mod stats;

pub use chunking::{chunk_corpus, chunk_document, tokenize, Chunk, ChunkId, ChunkSet, ChunkingConfig, TokenSequence};
pub use config::EngineConfig;
pub use corpus::{Corpus, Document, SummarizedDocument};
pub use dense::{cosine, DenseIndex};
pub use error::{Error, Result};
pub use graph::{GraphQueryConfig, KnowledgeGraph};
pub use hybrid::{minmax_normalize, HybridConfig, HybridHit, HybridRetriever};
pub use pipeline::{AnswerPipeline, Pipeline, PipelineAnswer, PipelineConfig, PipelineKind, VectorStores};
pub use provider::{Embedder, Generator, Providers, Summarizer};
pub use sparse::SparseIndex;

/// Top-k chunks for `question` by fused dense/sparse score.
pub fn hybrid_top_k(
    question: &str,
    chunks: &ChunkSet,
    sparse: &SparseIndex,
    dense: &DenseIndex,
    embedder: &dyn Embedder,
    cfg: &HybridConfig,
) -> Result<Vec<HybridHit>> {
    HybridRetriever::new(chunks, sparse, dense)?.top_k(question, embedder, cfg)
}
