//! Weighted fusion of dense and sparse retrieval.
//!
//! `score = λ · dense_norm + (1 − λ) · sparse_norm`, where each side is
//! min-max normalized over the candidate pool.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::chunking::{Chunk, ChunkId, ChunkSet};
use crate::dense::DenseIndex;
use crate::error::{Error, Result};
use crate::provider::Embedder;
use crate::ranking::{self, ScoreMap};
use crate::sparse::SparseIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridConfig {
    pub lambda: f64,
    pub k: usize,
    /// Top candidates taken from each retriever before fusion.
    pub candidate_pool_size: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            lambda: 0.8,
            k: 10,
            candidate_pool_size: 50,
        }
    }
}

impl HybridConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(0.0..=1.0).contains(&self.lambda) {
            errors.push(format!("hybrid: lambda ({}) must lie in [0, 1]", self.lambda));
        }
        if self.k == 0 {
            errors.push("hybrid: k must be positive".into());
        }
        if self.k > self.candidate_pool_size {
            errors.push(format!(
                "hybrid: k ({}) must not exceed candidate_pool_size ({})",
                self.k, self.candidate_pool_size
            ));
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.violations();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// `(s − min) / (max − min)`; a constant map normalizes to all ones.
pub fn minmax_normalize(scores: &ScoreMap) -> ScoreMap {
    let (min, max) = scores
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
    let range = max - min;
    scores
        .iter()
        .map(|(id, &s)| {
            let n = if range > 0.0 { (s - min) / range } else { 1.0 };
            (id.clone(), n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridHit {
    pub chunk: Chunk,
    pub score: f64,
    pub dense_norm: f64,
    pub sparse_norm: f64,
}

/// Dense and sparse stores built over the same chunks.
#[derive(Debug, Clone)]
pub struct HybridRetriever<'a> {
    pub chunks: &'a ChunkSet,
    pub sparse: &'a SparseIndex,
    pub dense: &'a DenseIndex,
}

impl<'a> HybridRetriever<'a> {
    pub fn new(chunks: &'a ChunkSet, sparse: &'a SparseIndex, dense: &'a DenseIndex) -> Result<Self> {
        if sparse.doc_count() != chunks.len() || dense.len() != chunks.len() {
            return Err(Error::Index(format!(
                "stores disagree on chunk count: chunks {}, sparse {}, dense {}",
                chunks.len(),
                sparse.doc_count(),
                dense.len()
            )));
        }
        Ok(HybridRetriever { chunks, sparse, dense })
    }

    /// Top `cfg.k` chunks by fused score. A side with zero weight adds no
    /// candidates, so λ = 0 and λ = 1 reduce to pure keyword and pure
    /// semantic retrieval.
    pub fn top_k(&self, question: &str, embedder: &dyn Embedder, cfg: &HybridConfig) -> Result<Vec<HybridHit>> {
        cfg.validate()?;
        let lambda = cfg.lambda;
        let sparse_raw = if lambda < 1.0 {
            self.sparse.scores(question)
        } else {
            ScoreMap::new()
        };
        let dense_raw = if lambda > 0.0 {
            let q = self.dense.embed_query(question, embedder)?;
            self.dense.scores(&q)?
        } else {
            ScoreMap::new()
        };

        let mut pool: BTreeSet<ChunkId> = BTreeSet::new();
        if lambda < 1.0 {
            let top = ranking::rank(
                sparse_raw.iter().map(|(id, &s)| (id.clone(), s)),
                Some(cfg.candidate_pool_size),
            );
            pool.extend(top.into_iter().map(|s| s.id));
        }
        if lambda > 0.0 {
            let top = ranking::rank(
                dense_raw.iter().map(|(id, &s)| (id.clone(), s)),
                Some(cfg.candidate_pool_size),
            );
            pool.extend(top.into_iter().map(|s| s.id));
        }
        Ok(self.fuse(pool, &sparse_raw, &dense_raw, cfg))
    }

    /// Fuses over every chunk instead of a candidate pool.
    pub fn exhaustive(&self, question: &str, embedder: &dyn Embedder, cfg: &HybridConfig) -> Result<Vec<HybridHit>> {
        cfg.validate()?;
        let sparse_raw = self.sparse.scores(question);
        let q = self.dense.embed_query(question, embedder)?;
        let dense_raw = self.dense.scores(&q)?;
        let pool = self.chunks.iter().map(Chunk::id).collect();
        Ok(self.fuse(pool, &sparse_raw, &dense_raw, cfg))
    }

    fn fuse(
        &self,
        pool: BTreeSet<ChunkId>,
        sparse_raw: &ScoreMap,
        dense_raw: &ScoreMap,
        cfg: &HybridConfig,
    ) -> Vec<HybridHit> {
        let side = |raw: &ScoreMap| -> ScoreMap {
            let in_pool: ScoreMap = pool
                .iter()
                .map(|id| (id.clone(), raw.get(id).copied().unwrap_or(0.0)))
                .collect();
            minmax_normalize(&in_pool)
        };
        let sparse_norm = side(sparse_raw);
        let dense_norm = side(dense_raw);
        let lambda = cfg.lambda;
        let fused = pool.iter().map(|id| {
            let d = if lambda > 0.0 { dense_norm[id] } else { 0.0 };
            let s = if lambda < 1.0 { sparse_norm[id] } else { 0.0 };
            (id.clone(), (lambda * d + (1.0 - lambda) * s).clamp(0.0, 1.0))
        });
        ranking::rank(fused, Some(cfg.k))
            .into_iter()
            .map(|scored| HybridHit {
                chunk: self
                    .chunks
                    .get(&scored.id)
                    .cloned()
                    .expect("pool ids come from the indexed chunk set"),
                score: scored.score,
                dense_norm: dense_norm[&scored.id],
                sparse_norm: sparse_norm[&scored.id],
            })
            .collect()
    }
}
