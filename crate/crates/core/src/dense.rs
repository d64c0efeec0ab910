//! Exact cosine-similarity vector store.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::{ChunkId, ChunkSet};
use crate::error::{Error, Result};
use crate::persist;
use crate::provider::Embedder;
use crate::ranking::{self, ScoreMap, Scored};

const FORMAT: &str = "k2rag-dense-index";
const VERSION: u32 = 1;

/// Cosine similarity. A zero vector on either side scores 0.
///
/// Panics if the lengths differ; callers check dimensions first.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different dimensions");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        tracing::warn!("cosine with a zero vector; scoring 0");
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEntry {
    pub id: ChunkId,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    embedder_id: String,
    dim: Option<usize>,
    entries: Vec<DenseEntry>,
}

impl DenseIndex {
    /// Embeds every chunk in order.
    pub fn build(chunks: &ChunkSet, embedder: &dyn Embedder) -> Result<Self> {
        let mut index = DenseIndex::empty(embedder.embedder_id());
        for chunk in chunks {
            let vector = embedder
                .embed(&chunk.text)
                .map_err(|e| Error::Index(format!("embedding chunk {}: {e}", chunk.id())))?;
            index.push(chunk.id(), vector)?;
        }
        Ok(index)
    }

    pub fn empty(embedder_id: impl Into<String>) -> Self {
        DenseIndex {
            embedder_id: embedder_id.into(),
            dim: None,
            entries: Vec::new(),
        }
    }

    /// Builds from precomputed vectors.
    pub fn from_vectors(
        embedder_id: impl Into<String>,
        vectors: impl IntoIterator<Item = (ChunkId, Vec<f64>)>,
    ) -> Result<Self> {
        let mut index = DenseIndex::empty(embedder_id);
        for (id, v) in vectors {
            index.push(id, v)?;
        }
        Ok(index)
    }

    fn push(&mut self, id: ChunkId, vector: Vec<f64>) -> Result<()> {
        match self.dim {
            None if vector.is_empty() => return Err(Error::Index(format!("chunk {id}: empty embedding"))),
            None => self.dim = Some(vector.len()),
            Some(dim) if dim != vector.len() => {
                return Err(Error::Index(format!(
                    "chunk {id}: embedding has dimension {}, index has {dim}",
                    vector.len()
                )))
            }
            Some(_) => {}
        }
        if self.entries.iter().any(|e| e.id == id) {
            return Err(Error::Index(format!("duplicate chunk {id}")));
        }
        self.entries.push(DenseEntry { id, vector });
        Ok(())
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DenseEntry] {
        &self.entries
    }

    pub fn ids(&self) -> HashSet<&ChunkId> {
        self.entries.iter().map(|e| &e.id).collect()
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        match self.dim {
            Some(dim) if dim != query.len() => Err(Error::Query(format!(
                "query vector has dimension {}, index has {dim}",
                query.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Cosine score of every indexed chunk against `query`.
    pub fn scores(&self, query: &[f64]) -> Result<ScoreMap> {
        self.check_query(query)?;
        Ok(self
            .entries
            .iter()
            .map(|e| (e.id.clone(), cosine(query, &e.vector)))
            .collect())
    }

    pub fn top_k(&self, query: &[f64], k: usize) -> Result<Vec<Scored>> {
        Ok(ranking::rank(self.scores(query)?, Some(k)))
    }

    /// Embeds `text` with `embedder` after checking it produced this index.
    pub fn embed_query(&self, text: &str, embedder: &dyn Embedder) -> Result<Vec<f64>> {
        let id = embedder.embedder_id();
        if id != self.embedder_id {
            return Err(Error::Query(format!(
                "index was built with embedder {:?}, query uses {id:?}",
                self.embedder_id
            )));
        }
        Ok(embedder.embed(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, FORMAT, VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let index: DenseIndex = persist::load(path, FORMAT, VERSION)?;
        let bad = index.entries.iter().find(|e| Some(e.vector.len()) != index.dim);
        if let Some(e) = bad {
            return Err(Error::Load {
                path: path.to_owned(),
                message: format!("entry {} does not match header dimension", e.id),
            });
        }
        Ok(index)
    }
}
